"""non-SPAM: a retina-inspired spatio-temporal filter bank used as an image codec.

Images are analyzed into per-time-bin coefficient maps by a non-separable
difference-of-Gaussians whose weights evolve in time, and reconstructed from
any subset of those coefficients.
"""
