"""Generation jobs, the prompt preset library, and backend clients.

Wire contract: POST {endpoint}/v1/generate with a JSON body of
{"prompt", "negative_prompt", "width", "height", "steps", "cfg_scale",
"seed", "scheduler", "batch_size"}; the response carries
{"images": [<base64 PNG>...], "seed", "parameters"}. The mock backend renders
procedural orchard scenes locally and exposes their ground truth.
"""

from __future__ import annotations

import base64
import io
import os
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import requests
from PIL import Image

from orchardstudio.dataset import validate_resolution
from orchardstudio.mockscene import MockSceneParams, MockSceneTruth, mock_generate

BACKEND_URL_ENV = "ORCHARDSTUDIO_BACKEND_URL"
DEFAULT_SCHEDULER = "euler_discrete"

CFG_MIN, CFG_MAX = 1.0, 30.0


class BackendError(Exception):
    retryable = False


class BackendConnectionError(BackendError):
    retryable = True


class BackendTimeoutError(BackendConnectionError):
    pass


class BackendRequestError(BackendError):
    """The backend rejected the job; its message is preserved verbatim."""


@dataclass(frozen=True)
class GenerationJob:
    positive_prompt: str
    negative_prompt: str = ""
    width: int = 1280
    height: int = 704
    steps: int = 30
    cfg_scale: float = 6.0
    seed: int = 0
    scheduler_id: str = DEFAULT_SCHEDULER
    batch_size: int = 1

    def __post_init__(self) -> None:
        check = validate_resolution(self.width, self.height, 32)
        if not check.ok:
            raise ValueError(
                f"job size {self.width}x{self.height} invalid: "
                + "; ".join(check.violations)
            )
        if not (CFG_MIN <= self.cfg_scale <= CFG_MAX):
            raise ValueError(
                f"cfg_scale must be in [{CFG_MIN:g}, {CFG_MAX:g}], got {self.cfg_scale}"
            )
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class PromptPreset:
    key: str
    positive_prompt: str
    negative_prompt: str = ""
    cfg_scale: float = 7.5
    steps: int = 50
    width: int = 512
    height: int = 512

    def to_job(self, seed: int = 0, batch_size: int = 1) -> GenerationJob:
        return GenerationJob(
            positive_prompt=self.positive_prompt,
            negative_prompt=self.negative_prompt,
            width=self.width,
            height=self.height,
            steps=self.steps,
            cfg_scale=self.cfg_scale,
            seed=seed,
            batch_size=batch_size,
        )


_NEG_EARLY = "blurry image, deformed, cartoon, drawing"
_FINAL_POSITIVE = (
    "a photo of a tree standing in the grass. the tree has many apples, "
    "the apples are both red and yellow. beneath the tree there are a lot of "
    "apples. The many apples are a combination of red apples and yellow "
    "apples. volumetric lighting. shadows, hyperrealism, 4k realism, photograph"
)
_SHADOW_POSITIVE = (
    "a photo of a tree standing in the grass the, tree is partly in the "
    "shadow. the tree has many apples in the tree that are both red (apples) "
    "and yellow (apples). beneath the tree there are a lot of apples. "
    "cinematic lighting, lots of fine details, hyper-realistic, real shadow, "
    "dark setting, ultra photorealistic dramatic shadows"
)

# The prompt ladder that led to the shipped orchard prompt, A through F,
# plus the production prompt and the shadow-emphasis variant.
PRESETS: dict[str, PromptPreset] = {
    "A": PromptPreset("A", "Apple trees"),
    "B": PromptPreset("B", "photo of a tree, hyperrealism, 4k, realistic, photograph"),
    "C": PromptPreset("C", "apple orchard, hyperrealism, 4k, realistic, photograph"),
    "D": PromptPreset(
        "D",
        "apple tree with many apples, apples, hyperrealism, 4k, render, "
        "cinematic lighting",
    ),
    "E": PromptPreset(
        "E",
        "apple tree with many apples, apples, hyperrealism, 4k, render, "
        "cinematic lighting",
        negative_prompt=_NEG_EARLY,
    ),
    "F": PromptPreset(
        "F",
        "photo of a tree branch with apples, apple tree, many apples, "
        "hyperrealism, 4k, realistic, photograph",
        negative_prompt=_NEG_EARLY,
    ),
    "final": PromptPreset(
        "final",
        _FINAL_POSITIVE,
        negative_prompt="blurry image, deformed, cartoon, drawing, painting",
        cfg_scale=6.0,
        steps=30,
        width=1280,
        height=704,
    ),
    "shadow": PromptPreset(
        "shadow",
        _SHADOW_POSITIVE,
        negative_prompt="blurry, deformed, cartoon, drawing, treeless, painting",
        cfg_scale=6.0,
        steps=30,
        width=1280,
        height=704,
    ),
}


def preset(key: str) -> PromptPreset:
    if key not in PRESETS:
        raise KeyError(f"unknown preset {key!r}; available: {', '.join(PRESETS)}")
    return PRESETS[key]


# --- wire serialization ------------------------------------------------------

def job_to_wire(job: GenerationJob) -> dict:
    return {
        "prompt": job.positive_prompt,
        "negative_prompt": job.negative_prompt,
        "width": job.width,
        "height": job.height,
        "steps": job.steps,
        "cfg_scale": job.cfg_scale,
        "seed": job.seed,
        "scheduler": job.scheduler_id,
        "batch_size": job.batch_size,
    }


def job_from_wire(body: dict) -> GenerationJob:
    return GenerationJob(
        positive_prompt=body["prompt"],
        negative_prompt=body.get("negative_prompt", ""),
        width=body["width"],
        height=body["height"],
        steps=body.get("steps", 30),
        cfg_scale=body.get("cfg_scale", 6.0),
        seed=body.get("seed", 0),
        scheduler_id=body.get("scheduler", DEFAULT_SCHEDULER),
        batch_size=body.get("batch_size", 1),
    )


@dataclass
class GenerationResult:
    images: list[bytes]
    seed: int
    parameters: dict


def result_to_wire(result: GenerationResult) -> dict:
    return {
        "images": [base64.b64encode(i).decode("ascii") for i in result.images],
        "seed": result.seed,
        "parameters": result.parameters,
    }


def result_from_wire(body: dict) -> GenerationResult:
    return GenerationResult(
        images=[base64.b64decode(i) for i in body["images"]],
        seed=body["seed"],
        parameters=body.get("parameters", {}),
    )


def _check_image_sizes(result: GenerationResult, job: GenerationJob) -> None:
    for i, data in enumerate(result.images):
        with Image.open(io.BytesIO(data)) as im:
            if im.size != (job.width, job.height):
                raise BackendRequestError(
                    f"image {i} is {im.size[0]}x{im.size[1]}, "
                    f"job asked for {job.width}x{job.height}"
                )


# --- backends ----------------------------------------------------------------

class MockBackend:
    """Pure-function backend rendering procedural scenes; batch item i uses seed+i."""

    def __init__(self, scene: MockSceneParams = MockSceneParams()):
        self.scene = scene

    def generate_with_truth(
        self, job: GenerationJob
    ) -> tuple[GenerationResult, list[MockSceneTruth]]:
        images = []
        truths = []
        for i in range(job.batch_size):
            png, truth = mock_generate(replace(job, seed=job.seed + i), self.scene)
            images.append(png)
            truths.append(truth)
        return (
            GenerationResult(images=images, seed=job.seed, parameters=job_to_wire(job)),
            truths,
        )

    def generate(self, job: GenerationJob) -> GenerationResult:
        return self.generate_with_truth(job)[0]


class HttpBackend:
    def __init__(self, base_url: str | None = None, timeout: float = 120.0):
        base_url = base_url or os.environ.get(BACKEND_URL_ENV)
        if not base_url:
            raise ValueError(
                f"no backend URL given and {BACKEND_URL_ENV} is not set"
            )
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def generate(self, job: GenerationJob) -> GenerationResult:
        try:
            resp = requests.post(
                f"{self.base_url}/v1/generate",
                json=job_to_wire(job),
                timeout=self.timeout,
            )
        except requests.Timeout as exc:
            raise BackendTimeoutError(f"backend timed out after {self.timeout}s") from exc
        except requests.ConnectionError as exc:
            raise BackendConnectionError(f"cannot reach {self.base_url}: {exc}") from exc
        if resp.status_code >= 400:
            raise BackendRequestError(resp.text)
        result = result_from_wire(resp.json())
        _check_image_sizes(result, job)
        return result


@dataclass
class JobHandle:
    job: GenerationJob
    _future: Future = field(repr=False)


class GenerationClient:
    """Submits jobs to a backend; multiple jobs may be in flight at once."""

    def __init__(self, backend, max_workers: int = 4):
        self.backend = backend
        self._executor = ThreadPoolExecutor(max_workers=max_workers)

    def submit(self, job: GenerationJob) -> JobHandle:
        return JobHandle(job=job, _future=self._executor.submit(self.backend.generate, job))

    def fetch(self, handle: JobHandle) -> GenerationResult:
        """Blocks until the job finishes; repeat calls return the same result."""
        return handle._future.result()

    def close(self) -> None:
        self._executor.shutdown(wait=True)

    def __enter__(self) -> "GenerationClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
