"""prompt-das: masked-autoencoder pretraining and visual prompt tuning for
DAS-style vibration imagery, at desk scale."""

__version__ = "0.1.0"
