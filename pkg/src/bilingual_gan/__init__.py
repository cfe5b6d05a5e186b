"""Bilingual latent-space GAN text generation on top of a shared-encoder translator."""
