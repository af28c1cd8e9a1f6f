"""Collects one summary line per acceptance criterion for the terminal report."""

LINES: list[str] = []


def verdict(cid: int, ok: bool, detail: str) -> None:
    line = f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    assert ok, line
