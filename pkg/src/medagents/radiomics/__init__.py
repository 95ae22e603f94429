"""Radiomics feature extraction from NIfTI image/mask pairs."""
