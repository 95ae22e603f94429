"""Master/specialist team, native tool wrappers and corpus evaluation."""

from .evaluation import (CATEGORIES, REPORT_HEADER, CorpusEntry, CorpusError, EvaluationRecord, EvaluationReport,
                         evaluate_corpus, evaluate_entry, is_subsequence, load_corpus, parse_corpus, pct,
                         write_report)
from .team import (MASTER, SPECIALIST_NAMES, SPECIALISTS, SpecialistHandle, Team, build_default_team, delegate,
                   delegation_summary, invoked_agents, run_master)
from .tools import NATIVE_TOOLS, default_registry, register_native_tools

__all__ = ["CATEGORIES", "MASTER", "NATIVE_TOOLS", "REPORT_HEADER", "SPECIALISTS", "SPECIALIST_NAMES",
           "CorpusEntry", "CorpusError", "EvaluationRecord", "EvaluationReport", "SpecialistHandle", "Team",
           "build_default_team", "default_registry", "delegate", "delegation_summary", "evaluate_corpus",
           "evaluate_entry", "invoked_agents", "is_subsequence", "load_corpus", "parse_corpus", "pct",
           "register_native_tools", "run_master", "write_report"]
