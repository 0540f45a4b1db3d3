"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

N_CRITERIA = 12
RESULTS = {}


def check(n, ok, detail):
    ok = bool(ok)
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def summary():
    if not RESULTS:
        return []
    return [RESULTS.get(n, f"criterion {n:2d}: NOT RUN") for n in range(1, N_CRITERIA + 1)]
