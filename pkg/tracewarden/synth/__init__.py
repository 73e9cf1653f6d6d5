from .corpus import CorpusEntry, CorpusManifest, CorpusSpec, ManifestEntry, synth_corpus
from .generators import (
    DEFAULT_INTENSITY,
    GENERATORS,
    SynthProfile,
    TraceBuilder,
    register_generator,
    synth_benign,
    synth_technique,
    synth_trace,
    verify_attack_activation,
)
