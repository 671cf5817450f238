"""Constraint-driven synthesis of HTTP call sequences for database-backed web applications.

Servlets are modelled as single-path relational transducers. Target states
are regressed through them with symbolic preimages, and concrete request
parameters come from a finite-scope model finder.
"""
from importlib import resources

from .expr import Transducer, eval_formula, eval_relalg, frame_close, prime, substitute, writes_set
from .image import post_image_enum, pre_image, pre_image_oracle
from .parser import SpecFile, parse_formula, parse_spec, pretty_print, print_formula
from .relmodel import NULL, Anon, Const, IntVal, Schema, Scope, State, check_instance, enumerate_states
from .solver import enumerate_models, get_modified, joint_sat, solve, value_domain
from .synth import call_seq_gen, detect_workflow_attack, extract_requests, validate_result


def corpus_path(name: str = "simplescarf.spec") -> str:
    """Filesystem path of a bundled spec file."""
    return str(resources.files(__name__).joinpath("corpus", name))


def load_corpus(name: str = "simplescarf.spec") -> SpecFile:
    return parse_spec(resources.files(__name__).joinpath("corpus", name).read_text(encoding="utf-8"))


__all__ = [
    "NULL", "Anon", "Const", "IntVal", "Schema", "Scope", "SpecFile", "State", "Transducer",
    "call_seq_gen", "check_instance", "corpus_path", "detect_workflow_attack", "enumerate_models",
    "enumerate_states", "eval_formula", "eval_relalg", "extract_requests", "frame_close", "get_modified",
    "joint_sat", "load_corpus", "parse_formula", "parse_spec", "post_image_enum", "pre_image",
    "pre_image_oracle", "pretty_print", "prime", "print_formula", "solve", "substitute", "validate_result",
    "value_domain", "writes_set",
]
