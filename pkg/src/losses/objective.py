"""Weighted total objective and its routing between the two optimizers."""

from dataclasses import dataclass

from ..models import LossWeights


@dataclass(frozen=True)
class LossRouting:
    """Parts of the total objective each side of the game minimizes."""

    gaussian: float  # lambda1 * recon + lambda3 * g_loss + lambda4 * const
    discriminator: float  # lambda2 * d_loss

    @property
    def total(self) -> float:
        return self.gaussian + self.discriminator


def route_loss(recon: float, d_loss: float, g_loss: float, const: float,
               weights: LossWeights = LossWeights()) -> LossRouting:
    return LossRouting(
        gaussian=weights.lambda1 * recon + weights.lambda3 * g_loss + weights.lambda4 * const,
        discriminator=weights.lambda2 * d_loss,
    )


def total_loss(recon: float, d_loss: float, g_loss: float, const: float,
               weights: LossWeights = LossWeights()) -> float:
    """Bookkeeping value of the full objective."""
    return route_loss(recon, d_loss, g_loss, const, weights).total
