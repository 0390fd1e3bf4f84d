"""Personalized email subject-line pipeline with A/B analysis.

Batch flow: select lapsed users, assign variants deterministically, ingest
per-user item recommendations, screen sensitive words, generate subjects
(template for control, guarded LLM for treatment), deliver through
pluggable sinks, and analyze the funnel with two-proportion z-tests. A
small REST service drives human review of sampled titles.
"""

from .cohort import (
    Assignment,
    CohortRules,
    UserRecord,
    Variant,
    assign_variant,
    audit_split,
    select_eligible,
)
from .catalog import (
    RecommendedItem,
    UserContext,
    build_user_context,
    group_by_category,
    load_recommendations,
)
from .lexicon import (
    CompiledLexicon,
    EntryKind,
    LexiconEntry,
    MatchMode,
    MatchSpan,
    compile_lexicon,
    filter_items,
    scan,
)
from .titlegen import (
    PromptConfig,
    TitleResult,
    TitleSource,
    Violation,
    ViolationCode,
    build_prompt,
    generate_title,
    parse_subject_json,
    render_template_title,
    request_title,
    validate_title,
)
from .metrics import (
    Classification,
    MetricResult,
    RateTable,
    aggregate_rates,
    analyze,
    classify,
    relative_lift,
    two_proportion_z,
)

__version__ = "0.1.0"
