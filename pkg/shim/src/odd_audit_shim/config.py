from dataclasses import dataclass

PROCEDURAL = "procedural"


@dataclass(frozen=True)
class ShimConfig:
    """Everything the server needs to load models and answer requests.

    ``apply_prompt_weights`` controls whether the "(token:w)" syntax scales
    that token's contribution to the encoding; with it off the weights are
    parsed and discarded.  ``sampler`` is forwarded to real diffusion
    pipelines; the procedural generator has no sampler and ignores it.
    """

    generator_model: str = PROCEDURAL
    classifier_model: str = PROCEDURAL
    device: str = "cpu"
    port: int = 8767
    max_batch: int = 8
    apply_prompt_weights: bool = True
    sampler: str = "dpmpp-2m"

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} outside [1, 65535]")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if not self.generator_model:
            raise ValueError("generator_model must be nonempty")
        if not self.classifier_model:
            raise ValueError("classifier_model must be nonempty")
