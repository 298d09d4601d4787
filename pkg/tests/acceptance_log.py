import time
from contextlib import contextmanager

# criterion id -> one line summary, filled in as the acceptance tests run
RESULTS: dict = {}


@contextmanager
def criterion(cid: str, title: str, budget: float):
    """Record PASS or FAIL for one criterion, including its time budget."""
    start = time.perf_counter()
    notes: list = []
    try:
        yield notes
    except BaseException as e:
        elapsed = time.perf_counter() - start
        RESULTS[cid] = f"{cid} FAIL {title} ({elapsed:.2f}s): {type(e).__name__}: {str(e).splitlines()[0] if str(e) else ''}"
        print(RESULTS[cid])
        raise
    elapsed = time.perf_counter() - start
    detail = "; ".join(notes)
    if elapsed > budget:
        RESULTS[cid] = f"{cid} FAIL {title} ({elapsed:.2f}s > {budget:g}s budget) {detail}"
        print(RESULTS[cid])
        raise AssertionError(f"{cid} exceeded its {budget:g}s budget: {elapsed:.2f}s")
    RESULTS[cid] = f"{cid} PASS {title} ({elapsed:.2f}s) {detail}".rstrip()
    print(RESULTS[cid])
