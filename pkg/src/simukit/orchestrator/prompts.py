"""Agent roles and prompt templates shipped as package data."""

from __future__ import annotations

import enum
import re
from functools import lru_cache
from importlib import resources

from ..errors import MissingPlaceholder


class AgentRole(str, enum.Enum):
    INVESTIGATOR = "Investigator"
    REVIEWER = "UnitTestReviewer"
    BUILDER = "BlockBuilder"
    EXECUTOR = "Executor"
    DEBUG_LOCATOR = "DebugLocator"
    REPORT_WRITER = "ReportWriter"


# (role, stage) -> template file stem
TEMPLATES = {
    (AgentRole.INVESTIGATOR, "round1"): "investigator_round1",
    (AgentRole.INVESTIGATOR, "round2"): "investigator_round2",
    (AgentRole.INVESTIGATOR, "revise"): "investigator_revise",
    (AgentRole.REVIEWER, "review"): "reviewer",
    (AgentRole.REVIEWER, "recheck"): "reviewer_recheck",
    (AgentRole.BUILDER, "build"): "builder",
    (AgentRole.BUILDER, "retry"): "builder_retry",
    (AgentRole.DEBUG_LOCATOR, "locate"): "debug_locator",
    (AgentRole.REPORT_WRITER, "report"): "report_writer",
}
DEFAULT_STAGE = {
    AgentRole.INVESTIGATOR: "round1",
    AgentRole.REVIEWER: "review",
    AgentRole.BUILDER: "build",
    AgentRole.DEBUG_LOCATOR: "locate",
    AgentRole.REPORT_WRITER: "report",
}

_FIELD_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")


@lru_cache(maxsize=None)
def load_text(stem: str) -> str:
    return resources.files("simukit").joinpath("prompts", stem + ".txt").read_text(encoding="utf-8")


def placeholders(template: str) -> list[str]:
    return list(dict.fromkeys(_FIELD_RE.findall(template)))


def template_for(role: AgentRole, stage: str | None = None) -> str:
    role = AgentRole(role)
    stage = stage or DEFAULT_STAGE.get(role)
    try:
        stem = TEMPLATES[(role, stage)]
    except KeyError:
        raise ValueError(f"no prompt template for {role.value} stage {stage!r}") from None
    return stem


def render_prompt(role: AgentRole, context: dict, stage: str | None = None) -> str:
    """Fill every ``{name}`` field of the role's template from ``context``."""
    stem = template_for(role, stage)
    text = load_text(stem)
    names = placeholders(text)
    missing = [n for n in names if context.get(n) is None]
    if missing:
        raise MissingPlaceholder(stem, missing)
    return _FIELD_RE.sub(lambda m: str(context[m.group(1)]), text)


def code_template() -> str:
    return load_text("code_template")


def functions_text() -> str:
    return load_text("functions")
