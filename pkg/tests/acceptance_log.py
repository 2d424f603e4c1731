"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[C{number:02d}] {'PASS' if ok else 'FAIL'} {title}: {detail}"
    print(line)
    LINES.append(line)
    assert ok, line
