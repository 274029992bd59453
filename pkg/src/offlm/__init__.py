"""offlm: desk-scale domain-adaptive masked-language-model toolkit.

Pipeline: select offensiveness-scored text by threshold, normalize and
tokenize it, retrain a small bidirectional encoder with the masked-LM
objective, fine-tune the result for classification, and report macro-F1
tables.
"""

__version__ = "0.1.0"
