from __future__ import annotations

from collections.abc import Callable
from collections.abc import Generator
from dataclasses import dataclass
from dataclasses import field
from typing import Literal

import pytest
from _pytest.terminal import TerminalReporter

DEFAULT_RESTARTS = 20
SLOW_MARKER = "slow"

type PytestIniType = Literal["string", "paths", "pathlist", "args", "linelist", "bool"]


@dataclass(frozen=True)
class Option[T]:
    name: str
    help: str
    ini_type: PytestIniType
    ini_default: object
    cli: dict[str, object]
    convert: Callable[[object], T]
    stash_key: pytest.StashKey[T] = field(default_factory=pytest.StashKey[T], init=False)


def to_restarts(value: object) -> int:
    restarts = int(str(value))
    if restarts < 1:
        raise pytest.UsageError(f"--restarts must be positive, got {restarts}.")
    return restarts


OPTIONS = {
    "restarts": Option[int](
        name="restarts",
        help="Random restarts for multistart training checks.",
        ini_type="string",
        ini_default=str(DEFAULT_RESTARTS),
        cli={"type": int},
        convert=to_restarts,
    ),
    "run-slow": Option[bool](
        name="run-slow",
        help="Run the long statistical checks marked 'slow'.",
        ini_type="bool",
        ini_default=False,
        cli={"action": "store_const", "const": True},
        convert=bool,
    ),
}


def pytest_addoption(parser: pytest.Parser) -> None:
    for option in OPTIONS.values():
        parser.addini(option.name, option.help, option.ini_type, option.ini_default)
        parser.addoption(f"--{option.name}", help=option.help, **option.cli)


def get_value[T](config: pytest.Config, option: Option[T]) -> T:
    name = option.name
    if (value := config.getoption(f"--{name}")) is None:
        value = config.getini(name)

    return option.convert(value)


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", f"{SLOW_MARKER}: long statistical check, needs --run-slow")
    for option in OPTIONS.values():
        config.stash[option.stash_key] = get_value(config, option)


@pytest.fixture
def restarts(request: pytest.FixtureRequest) -> int:
    return request.config.stash[OPTIONS["restarts"].stash_key]


def mark_slow_items_as_skipped(items: list[pytest.Item]) -> None:
    for item in items:
        if item.get_closest_marker(SLOW_MARKER) is not None:
            item.add_marker(pytest.mark.skip(reason="Slow check; run with --run-slow."))


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_collection_modifyitems(
    session: pytest.Session, config: pytest.Config, items: list[pytest.Item]
) -> Generator[None, None, None]:
    yield
    if not config.stash[OPTIONS["run-slow"].stash_key]:
        mark_slow_items_as_skipped(items)


def pytest_terminal_summary(
    terminalreporter: TerminalReporter,
    exitstatus: pytest.ExitCode,
    config: pytest.Config,
) -> None:
    if config.getoption("--collect-only") or config.stash[OPTIONS["run-slow"].stash_key]:
        return None

    skipped: list[pytest.TestReport] = terminalreporter.getreports("skipped")
    if slow := [report for report in skipped if SLOW_MARKER in report.keywords]:
        terminalreporter.ensure_newline()
        terminalreporter.line(
            f"{len(slow)} slow check{'s' if len(slow) > 1 else ''} skipped (use --run-slow)."
        )
