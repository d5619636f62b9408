from src.encoding.stripe_encoder import StripePositionEncoder, apply_s2pe

__all__ = ["StripePositionEncoder", "apply_s2pe"]
