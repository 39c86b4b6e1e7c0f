"""worldloom: agentic iterative 3D world generation over pluggable backends."""

from .agents import AgentSettings, CandidateFrame, DirectorDecision, StageVerdict, Verdict
from .geometry import CameraPose, Direction, PerturbationBounds, PoseDelta
from .manifest import SceneManifest, load_manifest, save_manifest
from .metrics import GlobalProfile, MetricTriple
from .orchestrator import Orchestrator, RunConfig, RunReport, run
from .protocol import BackendEndpoints, BackendSet, ImagePayload
from .world import Budgets, Frame, StopReason, WorldState, new_world

__version__ = "0.1.0"

__all__ = [
    "AgentSettings",
    "BackendEndpoints",
    "BackendSet",
    "Budgets",
    "CameraPose",
    "CandidateFrame",
    "Direction",
    "DirectorDecision",
    "Frame",
    "GlobalProfile",
    "ImagePayload",
    "MetricTriple",
    "Orchestrator",
    "PerturbationBounds",
    "PoseDelta",
    "RunConfig",
    "RunReport",
    "SceneManifest",
    "StageVerdict",
    "StopReason",
    "Verdict",
    "WorldState",
    "load_manifest",
    "new_world",
    "run",
    "save_manifest",
    "__version__",
]
