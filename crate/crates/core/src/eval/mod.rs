//! Ranking metrics, the cold-start split and end-to-end experiment runs.

mod cold;
mod metrics;
mod pipeline;

pub use cold::{make_cold_split, ColdSplit};
pub use metrics::{ndcg_at_k, recall_at_k, MetricReport};
pub use pipeline::{
    build_tokenizer, evaluate, recommend_all, report_for, run_ablation, run_ablation_matrix, run_generator_stage,
    run_variant, variant_config, AblationRow, AblationTable, EvalConfig, Evaluation, ExperimentConfig, MetricSummary,
    PreparedData, RunOutput, TokenizerArtifacts, UserRecommendations, Variant,
};
