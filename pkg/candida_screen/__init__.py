"""Triagem de candida em lâminas inteiras com classificação de tiles guiada por atenção."""

__version__ = "0.1.0"
