"""Parallel-concatenated multimodal VAE.

Frozen Gaussian random-matrix encoders turn image stripes and audio segments
into a shared latent space; two trainable convolutional decoders map the
latent back to an image and a waveform.  Training minimizes interaction
information between the two input modalities and the decoder output plus a
reconstruction term.
"""

__version__ = "0.1.0"
