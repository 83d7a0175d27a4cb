"""Network description: layer list, validation, JSON format, synthesis.

A network is an ordered list of layers wired as a DAG by explicit input
indices (index -1 is the input image, any other index is an earlier
layer's output).  The first layer consumes the 8-bit image; every other
activation edge carries binary spikes; the head emits 32-bit logits.

The on-disk form is JSON with exactly the fields named here; unknown
keys are rejected with the offending path so a typo in a hand-edited
file fails loudly instead of silently changing the workload.

Weights and batch-norm statistics are synthetic: derived from a seed,
per layer, through a fixed stream split, so a (spec, seed) pair pins
every bit of the model on every platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SpecError
from .neuron import RESET_HARD, RESET_SUBTRACT, TFLIFParams, fold_bn_into_lif
from .tensors import ByteImage, WeightMatrix

KIND_CONV_INPUT = "conv8bit_input"
KIND_CONV = "spike_conv"
KIND_LINEAR = "spike_linear"
KIND_ATTENTION = "spike_attention"
KIND_RESIDUAL = "residual"
KIND_HEAD = "head"

RES_IAND = "iand"
RES_OR = "or"

IMAGE_INPUT = -1

_LAYER_FIELDS = {
    KIND_CONV_INPUT: {"c_in", "c_out", "h_in", "w_in", "kernel", "stride",
                      "requant_shift"},
    KIND_CONV: {"c_in", "c_out", "h_in", "w_in", "kernel", "stride",
                "requant_shift"},
    KIND_LINEAR: {"n_tokens", "d_in", "d_out", "requant_shift"},
    KIND_ATTENTION: {"heads", "head_dim", "n_tokens"},
    KIND_RESIDUAL: {"op"},
    KIND_HEAD: {"n_tokens", "d_in", "num_classes"},
}
_OPTIONAL_FIELDS = {"kind", "inputs", "label"}


@dataclass(frozen=True)
class LayerSpec:
    """One layer; geometry fields are populated according to kind."""

    kind: str
    inputs: tuple[int, ...]
    label: str = ""
    # conv geometry
    c_in: int = 0
    c_out: int = 0
    h_in: int = 0
    w_in: int = 0
    kernel: int = 0
    stride: int = 0
    # linear / head geometry
    n_tokens: int = 0
    d_in: int = 0
    d_out: int = 0
    num_classes: int = 0
    # attention geometry
    heads: int = 0
    head_dim: int = 0
    # post-accumulator requantization (spiking layers only)
    requant_shift: int = 0
    # residual combine operator
    op: str = RES_IAND

    @property
    def spiking(self) -> bool:
        """True when a TFLIF stage follows this layer's accumulators."""
        return self.kind in (KIND_CONV_INPUT, KIND_CONV, KIND_LINEAR,
                             KIND_ATTENTION)

    @property
    def tflif_channels(self) -> int:
        if self.kind in (KIND_CONV_INPUT, KIND_CONV):
            return self.c_out
        if self.kind == KIND_LINEAR:
            return self.d_out
        if self.kind == KIND_ATTENTION:
            return self.heads * self.head_dim
        return 0

    def conv_out_hw(self) -> tuple[int, int]:
        h = (self.h_in - self.kernel) // self.stride + 1
        w = (self.w_in - self.kernel) // self.stride + 1
        return h, w


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    timesteps: int
    embed_dim: int
    num_blocks: int
    num_heads: int
    num_classes: int
    attn_scale_shift: int
    input_shape: tuple[int, int, int]  # C, H, W
    layers: tuple[LayerSpec, ...]
    decay: tuple[int, int] = (1, 2)
    reset_mode: str = RESET_HARD
    quant_bits: int = 16

    def __post_init__(self):
        trace_shapes(self)  # raises SpecError on any inconsistency

    def requant_shift_of(self, idx: int) -> int:
        layer = self.layers[idx]
        if layer.kind == KIND_ATTENTION:
            return self.attn_scale_shift
        return layer.requant_shift


# ---------------------------------------------------------------------------
# shape tracing and validation
# ---------------------------------------------------------------------------
# Shape descriptors: ("image", C, H, W), ("spikes", T, C, H, W),
# ("tokens", T, N, D), ("logits", T, classes).

def tokens_of(desc) -> tuple[int, int]:
    """View a spike map or token map as (N, D) token geometry."""
    if desc[0] == "tokens":
        return desc[2], desc[3]
    if desc[0] == "spikes":
        _, _, c, h, w = desc
        return h * w, c
    raise SpecError(f"cannot tokenize {desc[0]} activation")


def _trace_layer(i: int, layer: LayerSpec, spec: NetworkSpec, descs):
    def fetch(j: int):
        if j == IMAGE_INPUT:
            return ("image",) + spec.input_shape
        if not 0 <= j < i:
            raise SpecError(f"layers[{i}].inputs: index {j} not an earlier layer")
        return descs[j]

    ins = [fetch(j) for j in layer.inputs]
    t = spec.timesteps
    k = layer.kind

    if k == KIND_CONV_INPUT:
        if len(ins) != 1 or ins[0][0] != "image":
            raise SpecError(f"layers[{i}]: {k} must read the input image")
        if ins[0][1:] != (layer.c_in, layer.h_in, layer.w_in):
            raise SpecError(
                f"layers[{i}]: image is {ins[0][1:]}, layer declares "
                f"{(layer.c_in, layer.h_in, layer.w_in)}"
            )
    elif k == KIND_CONV:
        if len(ins) != 1 or ins[0][0] != "spikes":
            raise SpecError(f"layers[{i}]: {k} needs one spike-map input")
        if ins[0][2:] != (layer.c_in, layer.h_in, layer.w_in):
            raise SpecError(
                f"layers[{i}]: input map is {ins[0][2:]}, layer declares "
                f"{(layer.c_in, layer.h_in, layer.w_in)}"
            )
    if k in (KIND_CONV_INPUT, KIND_CONV):
        if layer.kernel < 1 or layer.stride < 1:
            raise SpecError(f"layers[{i}]: kernel and stride must be positive")
        if (layer.h_in - layer.kernel) % layer.stride or \
           (layer.w_in - layer.kernel) % layer.stride:
            raise SpecError(f"layers[{i}]: kernel/stride do not tile the input")
        h, w = layer.conv_out_hw()
        if h < 1 or w < 1:
            raise SpecError(f"layers[{i}]: empty convolution output")
        return ("spikes", t, layer.c_out, h, w)

    if k == KIND_LINEAR:
        if len(ins) != 1:
            raise SpecError(f"layers[{i}]: {k} takes exactly one input")
        n, d = tokens_of(ins[0])
        if (n, d) != (layer.n_tokens, layer.d_in):
            raise SpecError(
                f"layers[{i}]: input tokens ({n}, {d}) != declared "
                f"({layer.n_tokens}, {layer.d_in})"
            )
        return ("tokens", t, n, layer.d_out)

    if k == KIND_ATTENTION:
        if len(ins) != 3:
            raise SpecError(f"layers[{i}]: attention takes q, k, v inputs")
        d_model = layer.heads * layer.head_dim
        for name, desc in zip("qkv", ins):
            n, d = tokens_of(desc)
            if n != layer.n_tokens or d != d_model:
                raise SpecError(
                    f"layers[{i}]: {name} is ({n}, {d}), expected "
                    f"({layer.n_tokens}, {d_model})"
                )
        if d_model != spec.embed_dim:
            raise SpecError(
                f"layers[{i}]: heads*head_dim = {d_model} != embed_dim "
                f"{spec.embed_dim}"
            )
        return ("tokens", t, layer.n_tokens, d_model)

    if k == KIND_RESIDUAL:
        if len(ins) != 2:
            raise SpecError(f"layers[{i}]: residual takes two inputs")
        a, b = (tokens_of(d) if d[0] in ("spikes", "tokens") else None
                for d in ins)
        if a is None or b is None or a != b:
            raise SpecError(f"layers[{i}]: residual operands differ in shape")
        if layer.op not in (RES_IAND, RES_OR):
            raise SpecError(f"layers[{i}].op: unknown operator {layer.op!r}")
        return ("tokens", t) + a

    if k == KIND_HEAD:
        if len(ins) != 1:
            raise SpecError(f"layers[{i}]: head takes one input")
        n, d = tokens_of(ins[0])
        if (n, d) != (layer.n_tokens, layer.d_in):
            raise SpecError(
                f"layers[{i}]: head input ({n}, {d}) != declared "
                f"({layer.n_tokens}, {layer.d_in})"
            )
        return ("logits", t, layer.num_classes)

    raise SpecError(f"layers[{i}].kind: unknown kind {k!r}")


def trace_shapes(spec: NetworkSpec):
    """Per-layer output descriptors; raises SpecError on inconsistency."""
    if not spec.layers:
        raise SpecError("network has no layers")
    if spec.layers[0].kind != KIND_CONV_INPUT:
        raise SpecError("layers[0] must consume the 8-bit image")
    if any(l.kind == KIND_CONV_INPUT for l in spec.layers[1:]):
        raise SpecError("only layers[0] may consume the 8-bit image")
    if spec.layers[-1].kind != KIND_HEAD:
        raise SpecError("the final layer must be the classification head")
    if spec.timesteps < 1:
        raise SpecError("timesteps must be positive")
    if spec.reset_mode not in (RESET_HARD, RESET_SUBTRACT):
        raise SpecError(f"unknown reset mode {spec.reset_mode!r}")

    descs = []
    for i, layer in enumerate(spec.layers):
        descs.append(_trace_layer(i, layer, spec, descs))
    return descs


# ---------------------------------------------------------------------------
# JSON form
# ---------------------------------------------------------------------------

def _layer_to_json(i: int, layer: LayerSpec) -> dict:
    out = {"kind": layer.kind, "inputs": list(layer.inputs)}
    if layer.label:
        out["label"] = layer.label
    for name in sorted(_LAYER_FIELDS[layer.kind]):
        out[name] = getattr(layer, name)
    return out


def _layer_from_json(i: int, obj) -> LayerSpec:
    where = f"layers[{i}]"
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object")
    kind = obj.get("kind")
    if kind not in _LAYER_FIELDS:
        raise SpecError(f"{where}.kind: unknown kind {kind!r}")
    allowed = _LAYER_FIELDS[kind] | _OPTIONAL_FIELDS
    for key in obj:
        if key not in allowed:
            raise SpecError(f"{where}.{key}: unknown field for kind {kind!r}")
    for key in _LAYER_FIELDS[kind]:
        if key not in obj:
            raise SpecError(f"{where}.{key}: missing field for kind {kind!r}")

    inputs = obj.get("inputs", [i - 1])
    if (not isinstance(inputs, list) or
            not all(isinstance(x, int) for x in inputs)):
        raise SpecError(f"{where}.inputs: expected a list of layer indices")

    kwargs = {"kind": kind, "inputs": tuple(inputs),
              "label": str(obj.get("label", ""))}
    for key in _LAYER_FIELDS[kind]:
        val = obj[key]
        if key == "op":
            kwargs[key] = val
        elif not isinstance(val, int) or isinstance(val, bool):
            raise SpecError(f"{where}.{key}: expected an integer")
        else:
            kwargs[key] = val
    return LayerSpec(**kwargs)


_TOP_FIELDS = {"name", "timesteps", "embed_dim", "num_blocks", "num_heads",
               "num_classes", "attn_scale_shift", "input", "tflif", "layers"}
_TFLIF_FIELDS = {"decay_num", "decay_den", "reset_mode", "quant_bits"}


def network_to_json(spec: NetworkSpec) -> dict:
    return {
        "name": spec.name,
        "timesteps": spec.timesteps,
        "embed_dim": spec.embed_dim,
        "num_blocks": spec.num_blocks,
        "num_heads": spec.num_heads,
        "num_classes": spec.num_classes,
        "attn_scale_shift": spec.attn_scale_shift,
        "input": {"channels": spec.input_shape[0],
                  "height": spec.input_shape[1],
                  "width": spec.input_shape[2]},
        "tflif": {"decay_num": spec.decay[0], "decay_den": spec.decay[1],
                  "reset_mode": spec.reset_mode,
                  "quant_bits": spec.quant_bits},
        "layers": [_layer_to_json(i, l) for i, l in enumerate(spec.layers)],
    }


def network_from_json(obj) -> NetworkSpec:
    if not isinstance(obj, dict):
        raise SpecError("network description must be a JSON object")
    for key in obj:
        if key not in _TOP_FIELDS:
            raise SpecError(f"{key}: unknown field")
    for key in _TOP_FIELDS:
        if key not in obj:
            raise SpecError(f"{key}: missing field")

    image = obj["input"]
    if not isinstance(image, dict) or set(image) != {"channels", "height",
                                                     "width"}:
        raise SpecError("input: expected channels/height/width")
    tf = obj["tflif"]
    if not isinstance(tf, dict) or set(tf) != _TFLIF_FIELDS:
        raise SpecError("tflif: expected decay_num/decay_den/reset_mode/"
                        "quant_bits")
    layers_obj = obj["layers"]
    if not isinstance(layers_obj, list):
        raise SpecError("layers: expected a list")

    layers = tuple(_layer_from_json(i, l) for i, l in enumerate(layers_obj))
    return NetworkSpec(
        name=str(obj["name"]),
        timesteps=int(obj["timesteps"]),
        embed_dim=int(obj["embed_dim"]),
        num_blocks=int(obj["num_blocks"]),
        num_heads=int(obj["num_heads"]),
        num_classes=int(obj["num_classes"]),
        attn_scale_shift=int(obj["attn_scale_shift"]),
        input_shape=(int(image["channels"]), int(image["height"]),
                     int(image["width"])),
        layers=layers,
        decay=(int(tf["decay_num"]), int(tf["decay_den"])),
        reset_mode=str(tf["reset_mode"]),
        quant_bits=int(tf["quant_bits"]),
    )


def load_network_spec(path) -> NetworkSpec:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise SpecError(f"not valid JSON: {e}") from e
    return network_from_json(obj)


def save_network_spec(path, spec: NetworkSpec) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_json(spec), fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# topology builder
# ---------------------------------------------------------------------------

def _auto_shift(max_abs: int) -> int:
    """Requantization shift mapping a worst-case accumulator near 8 bits."""
    return max(0, int(np.ceil(np.log2(max(max_abs, 1)))) - 7)


def build_network(name: str, *, input_hw: int, scs_channels,
                  embed_dim: int, num_blocks: int, num_heads: int,
                  num_classes: int, mlp_ratio: int = 4,
                  timesteps: int = 4) -> NetworkSpec:
    """Assemble the standard topology: a stack of stride-2 convolutional
    stem layers that halve the image per layer, then encoder blocks of
    q/k/v projections, fused attention, an output projection and a
    two-layer MLP with IAND shortcuts, then the classification head.
    """
    chans = list(scs_channels)
    if len(chans) < 2:
        raise SpecError("stem needs at least one convolution")
    if chans[-1] != embed_dim:
        raise SpecError(
            f"last stem channel {chans[-1]} must equal embed_dim {embed_dim}"
        )
    if embed_dim % num_heads:
        raise SpecError("embed_dim must divide evenly into heads")
    head_dim = embed_dim // num_heads

    layers: list[LayerSpec] = []
    h = input_hw
    for li in range(len(chans) - 1):
        if h % 2:
            raise SpecError(f"stem layer {li}: input size {h} is odd")
        kind = KIND_CONV_INPUT if li == 0 else KIND_CONV
        peak = 4 * chans[li] * 128 * (255 if li == 0 else 1)
        layers.append(LayerSpec(
            kind=kind, inputs=(IMAGE_INPUT if li == 0 else len(layers) - 1,),
            label=f"stem{li}", c_in=chans[li], c_out=chans[li + 1],
            h_in=h, w_in=h, kernel=2, stride=2,
            requant_shift=_auto_shift(peak),
        ))
        h //= 2
    n_tokens = h * h
    d_hidden = embed_dim * mlp_ratio
    lin_shift = _auto_shift(embed_dim * 128)
    hid_shift = _auto_shift(d_hidden * 128)
    attn_shift = _auto_shift(n_tokens * head_dim)

    def linear(src: int, d_in: int, d_out: int, shift: int, label: str):
        layers.append(LayerSpec(
            kind=KIND_LINEAR, inputs=(src,), label=label,
            n_tokens=n_tokens, d_in=d_in, d_out=d_out, requant_shift=shift,
        ))
        return len(layers) - 1

    for b in range(num_blocks):
        x = len(layers) - 1
        q = linear(x, embed_dim, embed_dim, lin_shift, f"b{b}.q")
        k = linear(x, embed_dim, embed_dim, lin_shift, f"b{b}.k")
        v = linear(x, embed_dim, embed_dim, lin_shift, f"b{b}.v")
        layers.append(LayerSpec(
            kind=KIND_ATTENTION, inputs=(q, k, v), label=f"b{b}.attn",
            heads=num_heads, head_dim=head_dim, n_tokens=n_tokens,
        ))
        proj = linear(len(layers) - 1, embed_dim, embed_dim, lin_shift,
                      f"b{b}.proj")
        layers.append(LayerSpec(kind=KIND_RESIDUAL, inputs=(proj, x),
                                label=f"b{b}.res1", op=RES_IAND))
        r1 = len(layers) - 1
        m1 = linear(r1, embed_dim, d_hidden, lin_shift, f"b{b}.mlp1")
        m2 = linear(m1, d_hidden, embed_dim, hid_shift, f"b{b}.mlp2")
        layers.append(LayerSpec(kind=KIND_RESIDUAL, inputs=(m2, r1),
                                label=f"b{b}.res2", op=RES_IAND))

    layers.append(LayerSpec(
        kind=KIND_HEAD, inputs=(len(layers) - 1,), label="head",
        n_tokens=n_tokens, d_in=embed_dim, num_classes=num_classes,
    ))

    return NetworkSpec(
        name=name, timesteps=timesteps, embed_dim=embed_dim,
        num_blocks=num_blocks, num_heads=num_heads, num_classes=num_classes,
        attn_scale_shift=attn_shift,
        input_shape=(chans[0], input_hw, input_hw), layers=tuple(layers),
    )


def build_full_spec() -> NetworkSpec:
    """224x224 eight-block encoder with a 512-wide embedding."""
    return build_network(
        "spikformer-v2-8-512", input_hw=224,
        scs_channels=[3, 64, 128, 256, 512], embed_dim=512, num_blocks=8,
        num_heads=8, num_classes=1000,
    )


def build_desk_spec() -> NetworkSpec:
    """Small configuration for functional runs and bit-exactness checks."""
    return build_network(
        "desk", input_hw=8, scs_channels=[3, 16, 64], embed_dim=64,
        num_blocks=2, num_heads=2, num_classes=10,
    )


# ---------------------------------------------------------------------------
# synthetic parameters
# ---------------------------------------------------------------------------

@dataclass
class NetworkParams:
    """Seed-derived weights and folded neuron parameters per layer index."""

    seed: int
    weights: dict = field(default_factory=dict)
    tflif: dict = field(default_factory=dict)


def _weight_shape(layer: LayerSpec):
    if layer.kind in (KIND_CONV_INPUT, KIND_CONV):
        return (layer.c_out, layer.c_in, layer.kernel, layer.kernel)
    if layer.kind == KIND_LINEAR:
        return (layer.d_out, layer.d_in)
    if layer.kind == KIND_HEAD:
        return (layer.num_classes, layer.d_in)
    return None


def synthesize_parameters(spec: NetworkSpec, seed: int) -> NetworkParams:
    """Derive every weight and folded neuron parameter from one seed.

    Each layer gets its own child stream of the root seed sequence, so
    adding layers never perturbs the values of earlier ones.
    """
    params = NetworkParams(seed=seed)
    streams = np.random.SeedSequence(seed).spawn(len(spec.layers))
    for i, layer in enumerate(spec.layers):
        rng = np.random.Generator(np.random.PCG64(streams[i]))
        shape = _weight_shape(layer)
        if shape is not None:
            w = rng.integers(-128, 128, size=shape, dtype=np.int8)
            params.weights[i] = WeightMatrix(w)
        if layer.spiking:
            c = layer.tflif_channels
            params.tflif[i] = fold_bn_into_lif(
                gamma=rng.uniform(0.5, 1.5, c),
                beta=rng.uniform(-0.5, 0.5, c),
                mean=rng.uniform(-20.0, 20.0, c),
                var=rng.uniform(25.0, 400.0, c),
                eps=1e-5,
                theta=rng.uniform(0.1, 1.0, c),
                quant_bits=spec.quant_bits,
                decay=spec.decay,
                reset_mode=spec.reset_mode,
                timesteps=spec.timesteps,
            )
    return params


def random_image(spec: NetworkSpec, seed: int) -> ByteImage:
    """Deterministic synthetic input image for a given seed."""
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([seed, 0xB17E])))
    data = rng.integers(0, 256, size=spec.input_shape, dtype=np.uint8)
    return ByteImage(data)
