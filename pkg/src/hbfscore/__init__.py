"""Graph-attention hybrid beamforming with score-based CSI generation and denoising."""
