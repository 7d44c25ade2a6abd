"""Exact perplexity lower bounds for language models on PCFG-generated text."""
from .dist import EOS, TokenDistribution
from .earley import (LeftCornerMatrices, PrefixChart, causal_logprobs, causal_ppl,
                     left_corner_matrices, next_token_distribution, scan_prefix)
from .errors import (GrammarError, GrammarSyntaxError, ImproperGrammarError, PCFGError,
                     RecordFormatError, SplitExhaustionError, TreeSyntaxError,
                     UnknownTerminalError, UnparseableError)
from .grammar import (Grammar, Rule, Symbol, UnaryClosure, ValidationReport, binarize,
                      build_unary_closure, format_grammar, parse_grammar, prune_rules,
                      read_grammar, validate, write_grammar)
from .inside_outside import (Chart, inside, masked_distribution, masked_distributions,
                             masked_logprobs, outside,
                             perplexity, pseudo_ppl, sentence_logprobs)
from .lm_eval import EvalReport, compare, load_class_map, load_tags, pos_divergence
from .naturalness import ZipfFit, length_histogram, ngram_spearman, zipf_fit
from .oracle import EnumeratedLanguage, brute_inside, brute_masked, brute_prefix, enumerate_language
from .records import TokenLogProbRecord, load_records, parse_records, write_records
from .sampler import (Corpus, CorpusSplits, SamplerConfig, Vocabulary, build_vocab,
                      generate_corpus, sample_corpus, sample_sentence)
from .treebank import TreeNode, induce_from_treebank, parse_tree, read_treebank

__version__ = "0.1.0"
