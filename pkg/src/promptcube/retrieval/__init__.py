from .cost import CostReport, cost_profile, peak_allocation, synthetic_index
from .fusion import STRATEGIES, FusionParams, FusionWeights, analytic_ops
from .index import RetrievalIndex, index_from_features, order_candidates, rank, score
from .metrics import gt_ranks, mean_rank, meta_sum, recall_at_k, retrieval_summary
from .report import emit_report, reports_from_json
