from .errors import (
    TFacetsError,
    ConfigError,
    DataError,
    TaxonomyError,
    MalformedTaxonomy,
    DuplicateFacet,
    MultiParentFacet,
    OrphanParent,
    TaxonomyCycle,
    LevelMismatch,
    UnknownFacet,
    IntegrityError,
    EmbeddingError,
)
from .taxonomy import (
    ROOT,
    FacetNode,
    Taxonomy,
    parse_taxonomy,
    load_taxonomy,
    flatten_foursquare,
)
from .datastore import (
    Venue,
    Rating,
    Result,
    RequestCase,
    RatingScale,
    Dataset,
    DatasetPaths,
    load_dataset,
    write_dataset,
    candidate_facets,
)
from .synthetic import SyntheticSpec, SyntheticGenerator, generate_synthetic
from .profile import (
    UserProfile,
    GlobalStats,
    build_profile,
    build_global_stats,
    build_all_profiles,
)
from .coverage import (
    EmbeddingTable,
    Coverage,
    ExactCoverage,
    CosineCoverage,
    coverage,
    load_embeddings,
    fallback_embeddings,
    make_coverage,
)
from .scoring import (
    ScoringConfig,
    FacetScores,
    background_facet_given_query,
    query_given_facet,
    user_facet_posterior,
    score_model1,
    score_model2,
    score_all,
    FacetScorer,
    ProbabilisticScorer,
    Model1Scorer,
    Model2Scorer,
    MostProbablePersonal,
    MostProbableCollab,
    baseline_most_probable_personal,
    baseline_most_probable_collab,
    make_scorer,
    write_score_maps,
    read_score_maps,
)
from .treebuild import (
    BuildConfig,
    Aggregator,
    AvgAggregator,
    MaxAggregator,
    aggregate_children,
    RankedNode,
    MoreMarker,
    RankedTree,
    DisplayView,
    build_fixed_level,
    flatten_display_order,
)
from .evalsim import (
    SimConfig,
    SimOutcome,
    Click,
    filter_results,
    simulate,
    count_actions,
    f_scan,
    evaluate_run,
)
from .report import RunReport, results_table, format_table, compare_reports
