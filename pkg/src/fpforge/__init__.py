"""fpforge: fingerprint-domain augmentation for GAN-image detectors, desk scale."""

__version__ = "0.1.0"
