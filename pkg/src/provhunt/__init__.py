"""provhunt: CTI-knowledge-driven provenance analysis.

Lifts low-level system events into natural-language phrases, matches them
against a knowledge base of general indicators of compromise, reasons over a
relaxed APT-lifecycle model, and emits interpretable alerts with
analyst-ready reports.
"""

__version__ = "0.1.0"

from .amid import (  # noqa: F401
    ATIE,
    AmidStore,
    GIoC,
    MatchResult,
    associate_cti,
    calibrate_threshold,
    load_amid,
    prov_q,
    save_amid,
)
from .embedding import VectorTable, cosine, embed_phrase, load_vectors  # noqa: F401
from .graph import ProvGraph  # noqa: F401
from .lifting import LiftedEvent, RawEvent, lift_event  # noqa: F401
from .pipeline import DetectionPipeline  # noqa: F401
from .reasoning import Stage, raise_alert, streamline, technique_to_stages  # noqa: F401
