"""Exception hierarchy shared by every simukit stage."""

from __future__ import annotations


class SimukitError(Exception):
    """Base class for all domain errors raised by simukit."""


# -- knowledge base ---------------------------------------------------------


class KBError(SimukitError):
    pass


class MalformedRecord(KBError):
    def __init__(self, block_type: str, reason: str) -> None:
        super().__init__(f"malformed KB record {block_type!r}: {reason}")
        self.block_type = block_type
        self.reason = reason


class DuplicateBlockType(KBError):
    def __init__(self, block_type: str) -> None:
        super().__init__(f"duplicate KB record for block type {block_type!r}")
        self.block_type = block_type


class UnknownBlockType(KBError):
    """Raised when a block type is not in the knowledge base.

    ``suggestions`` holds the closest known types by edit distance. They are a
    hint for humans only; lookup never falls back to them.
    """

    def __init__(self, block_type: str, suggestions: list[str] | None = None) -> None:
        self.block_type = block_type
        self.suggestions = list(suggestions or [])
        msg = f"unknown block type {block_type!r}"
        if self.suggestions:
            msg += f" (did you mean: {', '.join(self.suggestions)}?)"
        super().__init__(msg)


class UnknownParameterValue(KBError):
    def __init__(self, block_type: str, parameter: str, value: str) -> None:
        super().__init__(
            f"{block_type}: value {value!r} is outside the domain of parameter {parameter!r}"
        )
        self.block_type = block_type
        self.parameter = parameter
        self.value = value


# -- netlist ----------------------------------------------------------------


class NetlistSyntaxError(SimukitError):
    """A located parse error; ``line_no`` is 1-based."""

    def __init__(self, line_no: int, text: str, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}: {text!r}")
        self.line_no = line_no
        self.text = text
        self.reason = reason


class BadBlockLine(NetlistSyntaxError):
    pass


class SlashInName(NetlistSyntaxError):
    pass


class DuplicateBlockName(NetlistSyntaxError):
    pass


class BadConnectionLine(NetlistSyntaxError):
    pass


class UnknownBlockName(NetlistSyntaxError):
    pass


class TypeMismatch(NetlistSyntaxError):
    pass


# -- codegen / executor -------------------------------------------------------


class UnvalidatedNetlist(SimukitError):
    def __init__(self, report=None) -> None:
        self.report = report
        detail = ""
        if report is not None:
            errors = [f for f in report.findings if f.severity == "error"]
            detail = f" ({len(errors)} error finding(s))"
        super().__init__("netlist has not passed validation" + detail)


class ScriptSyntaxError(SimukitError):
    """Builder output that cannot be read back as a build script."""


class LauncherNotFound(SimukitError):
    pass


class ExecutionTimeout(SimukitError):
    def __init__(self, seconds: float) -> None:
        super().__init__(f"external MATLAB run exceeded {seconds:g} s")
        self.seconds = seconds


# -- diff ---------------------------------------------------------------------


class EmptyGroundTruth(SimukitError):
    pass


# -- orchestrator -------------------------------------------------------------


class MissingPlaceholder(SimukitError):
    def __init__(self, template: str, names: list[str]) -> None:
        super().__init__(f"prompt {template!r} is missing context for: {', '.join(names)}")
        self.template = template
        self.names = names


class DirectiveNotFound(SimukitError):
    pass


class DirectiveMalformed(SimukitError):
    pass


class IllegalTransition(SimukitError):
    pass


class TransportError(SimukitError):
    pass


class ReplayMismatch(TransportError):
    pass


class LimitExceeded(SimukitError):
    pass


class ConfigError(SimukitError):
    pass
