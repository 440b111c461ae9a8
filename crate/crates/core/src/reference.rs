//! Published Natural Questions results for comparison rows in reports.
//! These are constants only: none of these baselines is run here.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub method: &'static str,
    /// Percent.
    pub in_accuracy: f64,
    pub lm_calls: f64,
    pub retrieval_calls: f64,
}

const fn row(method: &'static str, in_accuracy: f64, lm_calls: f64, retrieval_calls: f64) -> ReferenceRow {
    ReferenceRow {
        method,
        in_accuracy,
        lm_calls,
        retrieval_calls,
    }
}

/// Quality and call counts on Natural Questions with LLaMA 3.1-8B-Instruct.
pub const NQ_RESULTS: [ReferenceRow; 22] = [
    row("Never RAG", 44.6, 1.0, 0.00),
    row("Always RAG", 49.6, 1.0, 1.00),
    row("AdaptiveRAG", 49.6, 2.0, 0.98),
    row("DRAGIN", 48.0, 4.5, 2.24),
    row("FLARE", 45.0, 3.1, 2.07),
    row("Rowen_CM", 49.4, 29.5, 7.27),
    row("Seakr", 40.6, 14.6, 1.00),
    row("EigValLaplacian", 51.2, 1.8, 0.81),
    row("MaxTokenEntropy", 50.6, 1.7, 0.58),
    row("Hybrid UE", 50.2, 1.7, 0.77),
    row("Graph", 49.0, 1.0, 0.87),
    row("Popularity", 49.8, 1.0, 0.92),
    row("Frequency", 49.8, 1.0, 0.96),
    row("Knowledgability", 49.6, 1.0, 0.95),
    row("Question type", 49.6, 1.0, 0.88),
    row("Question complexity", 49.6, 1.0, 1.00),
    row("Context relevance", 49.0, 1.0, 1.00),
    row("Hybrid_UFP", 47.8, 1.0, 1.00),
    row("Hybrid_External", 46.0, 1.8, 1.00),
    row("Hybrid_FP", 48.4, 1.8, 1.00),
    row("All", 47.6, 1.8, 1.00),
    row("Ideal", 60.8, 1.6, 0.55),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCost {
    pub method: &'static str,
    /// Mean PFLOPs per question.
    pub mean_pflops: f64,
    /// Upper bound under full GPU utilisation.
    pub upper_bound_pflops: f64,
}

const fn cost(method: &'static str, mean_pflops: f64, upper_bound_pflops: f64) -> ReferenceCost {
    ReferenceCost {
        method,
        mean_pflops,
        upper_bound_pflops,
    }
}

/// Per-question compute on Natural Questions.
pub const NQ_COSTS: [ReferenceCost; 12] = [
    cost("AdaptiveRAG", 0.0216, 0.4389),
    cost("SeaKR", 0.3504, 2.4548),
    cost("DRAGIN", 0.2608, 1.0129),
    cost("FLARE", 0.09699, 0.9290),
    cost("Rowen", 1.865, 15.9677),
    cost("EigValLaplacian", 0.10517, 0.3291),
    cost("MaxTokenEntropy", 0.027116, 0.22121),
    cost("Entity_popularity", 0.0181238962, 0.210304),
    cost("Is_complex", 0.0181418, 0.2082277),
    cost("Llama_know", 0.018291, 0.22747),
    cost("Context_relevance", 0.018327, 0.2084429),
    cost("Question_type", 0.01812162, 0.2073669),
];

pub fn nq_cost(method: &str) -> Option<&'static ReferenceCost> {
    NQ_COSTS.iter().find(|c| c.method == method)
}

pub fn nq_result(method: &str) -> Option<&'static ReferenceRow> {
    NQ_RESULTS.iter().find(|r| r.method == method)
}
