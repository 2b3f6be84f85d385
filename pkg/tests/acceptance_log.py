"""Pass/fail lines collected by the acceptance tests, printed at session end."""

LINES: list[str] = []


def log(line: str) -> None:
    LINES.append(line)
    print(line)
