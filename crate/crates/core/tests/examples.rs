// Every example exposes `run_example`; running them here keeps them working.

#[path = "../examples/synthetic_corpus.rs"]
mod synthetic_corpus;

#[test]
fn synthetic_corpus_runs() {
    synthetic_corpus::run_example().expect("synthetic_corpus example");
}

#[path = "../examples/textgrid_injection.rs"]
mod textgrid_injection;

#[test]
fn textgrid_injection_runs() {
    textgrid_injection::run_example().expect("textgrid_injection example");
}

#[path = "../examples/routing_head.rs"]
mod routing_head;

#[test]
fn routing_head_runs() {
    routing_head::run_example().expect("routing_head example");
}

#[path = "../examples/offline_policy.rs"]
mod offline_policy;

#[test]
fn offline_policy_runs() {
    offline_policy::run_example().expect("offline_policy example");
}

#[path = "../examples/hybrid_retrieval.rs"]
mod hybrid_retrieval;

#[test]
fn hybrid_retrieval_runs() {
    hybrid_retrieval::run_example().expect("hybrid_retrieval example");
}

#[path = "../examples/dual_lane_trace.rs"]
mod dual_lane_trace;

#[test]
fn dual_lane_trace_runs() {
    dual_lane_trace::run_example().expect("dual_lane_trace example");
}

#[path = "../examples/latency_bench.rs"]
mod latency_bench;

#[test]
fn latency_bench_runs() {
    latency_bench::run_example().expect("latency_bench example");
}

#[path = "../examples/mode_ablation.rs"]
mod mode_ablation;

#[test]
fn mode_ablation_runs() {
    mode_ablation::run_example().expect("mode_ablation example");
}

#[path = "../examples/score_calibration.rs"]
mod score_calibration;

#[test]
fn score_calibration_runs() {
    score_calibration::run_example().expect("score_calibration example");
}

#[path = "../examples/ranking_stability.rs"]
mod ranking_stability;

#[test]
fn ranking_stability_runs() {
    ranking_stability::run_example().expect("ranking_stability example");
}

#[path = "../examples/text_metrics.rs"]
mod text_metrics;

#[test]
fn text_metrics_runs() {
    text_metrics::run_example().expect("text_metrics example");
}
