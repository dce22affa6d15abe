"""ANX agent-native protocol runtime.

Layers: structured config/markup (Expression), a publish/discover Hub with
user-token authority (Exchange), and a Core with CLI carrier, lifecycle state
machine, sensitive-value vault, node store, and SOP engine (Execution). A
scripted agent simulator drives the whole stack without any LLM.
"""

from .config import AnxConfig, CaseArm, ItemDef, Option, OptionsSet, StepDef, parse_config
from .cli import CliCommand, format_command, parse_command
from .core import AGENT, ChannelIdentity, Core, ExecResult, LifecycleState, ui_channel
from .errors import AnxError
from .hub import AppManifest, DiscoveryResult, Hub, UserToken
from .markup import (
    MASK,
    AnxMarkupDoc,
    MarkupNode,
    ViewerRole,
    parse_markup,
    redact,
    render_markup,
    serialize,
)
from .sizing import SizeReport, measure_size
from .sop import (
    DecisionProvider,
    FixedProvider,
    ReferenceProvider,
    SopEngine,
    SopRun,
    StepStatus,
    load_sop,
    ready_steps,
)

__version__ = "0.1.0"

__all__ = [
    "AGENT",
    "AnxConfig",
    "AnxError",
    "AnxMarkupDoc",
    "AppManifest",
    "CaseArm",
    "ChannelIdentity",
    "CliCommand",
    "Core",
    "DecisionProvider",
    "DiscoveryResult",
    "ExecResult",
    "FixedProvider",
    "Hub",
    "ItemDef",
    "LifecycleState",
    "MASK",
    "MarkupNode",
    "Option",
    "OptionsSet",
    "ReferenceProvider",
    "SizeReport",
    "SopEngine",
    "SopRun",
    "StepDef",
    "StepStatus",
    "UserToken",
    "ViewerRole",
    "format_command",
    "load_sop",
    "measure_size",
    "parse_command",
    "parse_config",
    "parse_markup",
    "ready_steps",
    "redact",
    "render_markup",
    "serialize",
    "ui_channel",
]
