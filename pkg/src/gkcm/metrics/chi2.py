from __future__ import annotations

from scipy.special import gammaincinv


def chi2_quantile(dof: int, confidence: float) -> float:
    """Chi-squared threshold gamma with P(X <= gamma) = confidence for X ~ chi2(dof)."""
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    return float(2.0 * gammaincinv(0.5 * dof, confidence))
