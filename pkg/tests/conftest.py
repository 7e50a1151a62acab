"""Shared pytest wiring: the acceptance-criterion result board.

Acceptance tests record their verdict before asserting, so the summary
shows one PASS/FAIL line per criterion even when a criterion's assertion
fails.
"""

_BOARD: dict[int, tuple[str, bool, str]] = {}


def register_criterion(num: int, label: str, passed: bool,
                       detail: str = "") -> None:
    _BOARD[num] = (label, passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _BOARD:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_BOARD):
        label, passed, detail = _BOARD[num]
        line = f"criterion {num} [{'PASS' if passed else 'FAIL'}] {label}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
