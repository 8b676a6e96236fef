"""Fair, interpretable representations by projecting autoencoder latents onto
a learned direction that tracks the target and decorrelates from biases."""

__version__ = "0.1.0"
