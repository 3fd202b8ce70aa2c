"""Request/response models for the job API.

The CLI builds these same models, so the service layer is the single
entry point for every run regardless of transport.
"""

from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field

from ..mdl import DEFAULT_FRACTIONS


class ProbeConfigModel(BaseModel):
    num_classes: Optional[int] = None  # None: take K from the activation header
    projection_dim: int = 256
    mlp_hidden_dim: int = 256
    layer_mode: Union[Literal["mix"], int] = "mix"
    pooling: Literal["mean"] = "mean"
    learning_rate: float = 5e-5
    batch_size: int = 32
    epochs: int = 5


class PrepRequest(BaseModel):
    kind: Literal["prep"] = "prep"
    examples_path: str
    out_dir: str
    ratios: Tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0
    train_size: Optional[int] = None


class EdgeRequest(BaseModel):
    kind: Literal["edge"] = "edge"
    activations_path: str
    splits_path: str
    out_dir: str
    seeds: List[int] = [0, 1, 2]
    config: ProbeConfigModel = ProbeConfigModel()
    train_size: Optional[int] = None
    subsample_seed: int = 0
    weights_mode: Optional[str] = None  # label override; default from metadata
    save_params: bool = True


class MdlRequest(BaseModel):
    kind: Literal["mdl"] = "mdl"
    activations_path: str
    splits_path: Optional[str] = None
    split: Literal["train", "dev", "test"] = "train"
    out_dir: str
    seed: int = 0
    fractions: List[float] = list(DEFAULT_FRACTIONS)
    config: ProbeConfigModel = ProbeConfigModel()


class MdlLayersRequest(BaseModel):
    kind: Literal["mdl-layers"] = "mdl-layers"
    activations_path: str
    splits_path: Optional[str] = None
    split: Literal["train", "dev", "test"] = "train"
    out_dir: str
    seed: int = 0
    fractions: List[float] = list(DEFAULT_FRACTIONS)
    config: ProbeConfigModel = ProbeConfigModel()
    layers: Optional[List[int]] = None  # None: all layers
    run_id: Optional[str] = None


class TransferSetModel(BaseModel):
    dataset: str
    lang: str
    encoder: str
    weights_mode: Literal["pretrained", "randomized"]
    activations_path: str
    splits_path: str


class TransferRequest(BaseModel):
    kind: Literal["transfer"] = "transfer"
    sets: List[TransferSetModel]
    out_dir: str
    seeds: List[int] = [0, 1, 2]
    train_size: Optional[int] = None
    subsample_seed: int = 0
    config: ProbeConfigModel = ProbeConfigModel()
    max_workers: int = 4


class ReportRequest(BaseModel):
    kind: Literal["report"] = "report"
    curve_csvs: List[str]
    out_dir: str
    stem: str = "combined_layers"


class SynthRequest(BaseModel):
    """Synthetic activation set with a plantable signal layer.

    Writes synth.apf plus, when ratios are given, a stratified
    splits.json over the generated example ids, so the full pipeline is
    runnable without any external encoder.
    """
    kind: Literal["synth"] = "synth"
    out_dir: str
    num_examples: int = 2000
    num_layers: int = 13
    hidden_dim: int = 64
    num_classes: int = 2
    seed: int = 0
    signal_layer: Optional[int] = None
    signal_strength: float = 0.0
    max_span_len: int = 3
    ratios: Optional[Tuple[float, float, float]] = (0.7, 0.1, 0.2)
    weights_mode: Literal["pretrained", "randomized"] = "pretrained"


JobRequest = Annotated[
    Union[PrepRequest, EdgeRequest, MdlRequest, MdlLayersRequest,
          TransferRequest, ReportRequest, SynthRequest],
    Field(discriminator="kind"),
]


class JobSubmission(BaseModel):
    request: JobRequest


class JobInfo(BaseModel):
    job_id: str
    kind: str
    status: Literal["queued", "running", "succeeded", "failed"]
    error: Optional[str] = None
    error_kind: Optional[str] = None
    outputs: List[str] = []
    summary: Dict = {}


class SelftestResponse(BaseModel):
    max_gradient_rel_error: float
    gradient_draws: int
    mdl_oracle_bit_exact: bool
    passed: bool


class HealthResponse(BaseModel):
    status: str
    version: str
