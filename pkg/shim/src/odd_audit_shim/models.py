"""Model loading: procedural backends by default, real adapters on demand.

Real adapters import their heavyweight dependencies only when a non-default
model id is configured, so the shim serves procedurally in environments
without model weights installed.
"""
import io

from .config import PROCEDURAL, ShimConfig
from .procedural import ProceduralClassifier, ProceduralGenerator
from .prompts import parse_weighted_prompt


def load_generator(config: ShimConfig):
    if config.generator_model == PROCEDURAL:
        return ProceduralGenerator(config.apply_prompt_weights)
    return DiffusionGenerator(
        config.generator_model, config.device, config.sampler, config.apply_prompt_weights
    )


def load_classifier(config: ShimConfig):
    if config.classifier_model == PROCEDURAL:
        return ProceduralClassifier()
    return ZeroShotClassifier(config.classifier_model, config.device)


class DiffusionGenerator:
    """Text-to-image via a diffusers pipeline.

    Prompt weights are applied by scaling the token embeddings of each
    "(token:w)" span by w before the text encoder runs, then passing the
    encoding as prompt_embeds.
    """

    def __init__(self, model_id: str, device: str, sampler: str, apply_weights: bool):
        try:
            import torch
            from diffusers import AutoPipelineForText2Image
        except ImportError as exc:
            raise RuntimeError(
                f"generator model {model_id!r} needs the diffusers package: {exc}"
            ) from exc
        self.model_id = model_id
        self.apply_weights = apply_weights
        self._torch = torch
        self._pipe = AutoPipelineForText2Image.from_pretrained(model_id).to(device)
        if sampler == "dpmpp-2m":
            from diffusers import DPMSolverMultistepScheduler

            self._pipe.scheduler = DPMSolverMultistepScheduler.from_config(
                self._pipe.scheduler.config
            )

    def _encode(self, prompt: str):
        tokenizer = self._pipe.tokenizer
        encoder = self._pipe.text_encoder
        pairs = parse_weighted_prompt(prompt)
        text = " ".join(t for t, _ in pairs)
        tokens = tokenizer(
            text, padding="max_length", truncation=True, return_tensors="pt"
        )
        embeds = encoder.get_input_embeddings()(tokens.input_ids)
        if self.apply_weights:
            for token, weight in pairs:
                if weight == 1.0:
                    continue
                for tid in tokenizer(token, add_special_tokens=False).input_ids:
                    embeds[tokens.input_ids == tid] *= weight
        return encoder(inputs_embeds=embeds).last_hidden_state

    def generate(self, prompt, n_samples, steps, resolution, seed, index_offset=0):
        torch = self._torch
        out = []
        for i in range(index_offset, index_offset + n_samples):
            generator = torch.Generator().manual_seed(seed * 100_003 + i)
            image = self._pipe(
                prompt_embeds=self._encode(prompt),
                num_inference_steps=steps,
                height=resolution,
                width=resolution,
                generator=generator,
            ).images[0]
            buf = io.BytesIO()
            image.save(buf, format="PNG")
            out.append(buf.getvalue())
        return out


class ZeroShotClassifier:
    """Zero-shot image classification with a CLIP-style dual encoder."""

    def __init__(self, model_id: str, device: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                f"classifier model {model_id!r} needs the transformers package: {exc}"
            ) from exc
        self.model_id = model_id
        self._torch = torch
        self._model = CLIPModel.from_pretrained(model_id).to(device)
        self._processor = CLIPProcessor.from_pretrained(model_id)
        self._device = device

    def classify(self, images, classes):
        from PIL import Image

        pil = [Image.open(io.BytesIO(b)).convert("RGB") for b in images]
        prompts = [f"a photo of a {c}" for c in classes]
        inputs = self._processor(
            text=prompts, images=pil, return_tensors="pt", padding=True
        ).to(self._device)
        with self._torch.no_grad():
            logits = self._model(**inputs).logits_per_image
            probs = logits.softmax(dim=1).cpu().numpy()
        return [
            {c: float(p) for c, p in zip(classes, row)} for row in probs
        ]
