"""Crowdsourced ACR evaluation: group plans, spam filtering, MOS statistics and ranking."""
from .groups import GroupPlanError, RatingGroup, assemble_groups, membership_counts
from .ranking import RankingEntry, rank_models
from .ratings import (RaterVerdict, RatingRecord, SpamReport, filter_spam_raters,
                      per_clip_means, read_ratings, write_ratings)
from .stats import (AnovaResult, MosSummary, PValueMatrix, anova_oneway, anova_pairwise,
                    betainc_regularized, dmos, f_sf, mos_summary, spearman_rho)

__all__ = [
    "AnovaResult", "GroupPlanError", "MosSummary", "PValueMatrix", "RankingEntry",
    "RaterVerdict", "RatingGroup", "RatingRecord", "SpamReport", "anova_oneway",
    "anova_pairwise", "assemble_groups", "betainc_regularized", "dmos", "f_sf",
    "filter_spam_raters", "membership_counts", "mos_summary", "per_clip_means",
    "rank_models", "read_ratings", "spearman_rho", "write_ratings",
]
