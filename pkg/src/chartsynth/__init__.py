"""chartsynth: synthetic reasoning-QA tooling for chart question answering.

Generates templated questions with executable step-by-step rationales from
chart annotations, executes rationales through pluggable answerers, filters
service-generated candidates by decoding score, and scores predictions with
strict and relaxed accuracy.
"""

__version__ = "0.1.0"

from .charts import ChartSpec, DataTable, Entry, Group, linearize_table, parse_chart_spec
from .evaluation import evaluate, relaxed_match, strict_match
from .executor import GroundTruthAnswerer, ScriptedAnswerer, ServiceAnswerer, execute
from .pipeline import QaRecord, StatsReport, filter_records, run_generation
from .queries import evaluate_query, spatial_rank
from .rationales import parse_rationale, print_rationale
from .templates import TemplateQa, generate_corpus, instantiate, load_default_templates

__all__ = [
    "ChartSpec",
    "DataTable",
    "Entry",
    "Group",
    "GroundTruthAnswerer",
    "QaRecord",
    "ScriptedAnswerer",
    "ServiceAnswerer",
    "StatsReport",
    "TemplateQa",
    "__version__",
    "evaluate",
    "evaluate_query",
    "execute",
    "filter_records",
    "generate_corpus",
    "instantiate",
    "linearize_table",
    "load_default_templates",
    "parse_chart_spec",
    "parse_rationale",
    "print_rationale",
    "relaxed_match",
    "run_generation",
    "spatial_rank",
    "strict_match",
]
