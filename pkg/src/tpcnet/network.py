"""TPCNet: estimators, dual-stream cross-guided U-net, output constraint and color head."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import torch
import torch.nn as nn

from .blocks import CGAB, CgabVariant, DownBlock, UpBlock
from .colorspace import get_color_space, merge_channels
from .estimators import EstimatorOutputs, LightFeatureEstimator, ReflectivityFeatureEstimator

NUM_SCALES = 4
SIZE_MULTIPLE = 16


@dataclass
class NetworkConfig:
    base_channels: int = 12
    base_heads: int = 1
    color_space: str = "ycbcr"
    use_output_constraint: bool = True
    use_light_constraints: bool = True
    scale_channels: tuple[int, ...] | None = None
    heads_per_scale: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.scale_channels is None:
            self.scale_channels = tuple(self.base_channels * 2**i for i in range(NUM_SCALES))
        if self.heads_per_scale is None:
            self.heads_per_scale = tuple(self.base_heads * 2**i for i in range(NUM_SCALES))
        self.scale_channels = tuple(int(c) for c in self.scale_channels)
        self.heads_per_scale = tuple(int(k) for k in self.heads_per_scale)
        if len(self.scale_channels) != NUM_SCALES or len(self.heads_per_scale) != NUM_SCALES:
            raise ValueError(f"need exactly {NUM_SCALES} scales")
        if self.scale_channels[0] != self.base_channels:
            raise ValueError("scale_channels[0] must equal base_channels")
        for c, k in zip(self.scale_channels, self.heads_per_scale):
            if k < 1 or c % k:
                raise ValueError(f"scale channels {c} not divisible by heads {k}")
        get_color_space(self.color_space)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_channels"] = list(self.scale_channels)
        d["heads_per_scale"] = list(self.heads_per_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)


# constraint ablations: which physical identities are wired into the graph
ABLATIONS = {
    "full": dict(use_output_constraint=True, use_light_constraints=True),
    "no-constraints": dict(use_output_constraint=False, use_light_constraints=False),
    "no-output-constraint": dict(use_output_constraint=False, use_light_constraints=True),
    "no-light-constraints": dict(use_output_constraint=True, use_light_constraints=False),
}


def check_input_size(H: int, W: int) -> None:
    if H % SIZE_MULTIPLE or W % SIZE_MULTIPLE:
        raise ValueError(f"input {H}x{W} must be divisible by {SIZE_MULTIPLE}")


class DCGT(nn.Module):
    """Four-scale dual-stream U-net.

    The reflectance/light stream runs ``CGAB(R_i, e_i)`` at every scale.  The
    color stream runs ``CGAB(F_C_i, R_i * e_i)`` with the guidance product
    recomputed from the current reflectance/light pair at each scale, never
    carried over from full resolution.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        cs, ks = cfg.scale_channels, cfg.heads_per_scale
        self.enc_rl = nn.ModuleList(CGAB(cs[i], ks[i], CgabVariant.BASE) for i in range(3))
        self.enc_c = nn.ModuleList(CGAB(cs[i], ks[i], CgabVariant.V) for i in range(3))
        self.down_rl = nn.ModuleList(DownBlock(2 * cs[i], 2 * cs[i + 1]) for i in range(3))
        self.down_c = nn.ModuleList(DownBlock(2 * cs[i], cs[i + 1]) for i in range(3))
        self.mid_rl = CGAB(cs[3], ks[3], CgabVariant.M)
        self.mid_c = CGAB(cs[3], ks[3], CgabVariant.VM)
        self.up_rl = nn.ModuleList(UpBlock(2 * cs[i + 1], 2 * cs[i], 2 * cs[i]) for i in range(3))
        self.up_c = nn.ModuleList(UpBlock(2 * cs[i + 1], 2 * cs[i], cs[i]) for i in range(3))
        self.dec_rl = nn.ModuleList(CGAB(cs[i], ks[i], CgabVariant.BASE) for i in range(3))
        self.dec_c = nn.ModuleList(CGAB(cs[i], ks[i], CgabVariant.V) for i in range(3))
        self.out_c = nn.Conv2d(2 * cs[0], cs[0], 1)

    def forward(self, R, e, F_c, probes: dict | None = None):
        skips_rl, skips_c, guides = [], [], []
        for i in range(3):
            guide = R * e
            guides.append(guide)
            x_rl = self.enc_rl[i](R, e)
            x_c = self.enc_c[i](F_c, guide)
            skips_rl.append(x_rl)
            skips_c.append(x_c)
            R, e = self.down_rl[i](x_rl).chunk(2, dim=-3)
            F_c = self.down_c[i](x_c)
        guide = R * e
        guides.append(guide)
        x_rl = self.mid_rl(R, e)
        x_c = self.mid_c(F_c, guide)
        for i in reversed(range(3)):
            R, e = self.up_rl[i](x_rl, skips_rl[i]).chunk(2, dim=-3)
            F_c = self.up_c[i](x_c, skips_c[i])
            guide = R * e
            guides.append(guide)
            x_rl = self.dec_rl[i](R, e)
            x_c = self.dec_c[i](F_c, guide)
        R_star, e_star = x_rl.chunk(2, dim=-3)
        if probes is not None:
            probes["guides"] = guides
        return R_star, e_star, self.out_c(x_c)

    def color_parameters(self):
        for name, p in self.named_parameters():
            if name.split(".")[0] in ("enc_c", "down_c", "mid_c", "up_c", "dec_c", "out_c"):
                yield name, p


def dcgt_forward(R_hat, e_hat, F_c, module: DCGT):
    return module(R_hat, e_hat, F_c)


def apply_output_constraint(R_star, e_star, alpha_hat, enabled: bool = True, mapping: nn.Module | None = None):
    """``alpha e R + (1 - alpha) e / 2``, or a learned conv of ``R|e`` when the constraint is ablated."""
    if enabled:
        return alpha_hat * e_star * R_star + (1 - alpha_hat) * e_star / 2
    if mapping is None:
        raise ValueError("the unconstrained path needs a mapping conv")
    return mapping(torch.cat([R_star, e_star], dim=-3))


@dataclass
class TPCNetOutputs:
    I_en: torch.Tensor
    I_color: torch.Tensor
    I_color_star: torch.Tensor
    estimates: EstimatorOutputs
    F_c: torch.Tensor
    R_star: torch.Tensor
    e_star: torch.Tensor
    F_c_star: torch.Tensor
    E_star: torch.Tensor
    Y_color: torch.Tensor
    I_brightness: torch.Tensor
    extras: dict = field(default_factory=dict)


class TPCNet(nn.Module):
    def __init__(self, cfg: NetworkConfig | None = None):
        super().__init__()
        cfg = cfg or NetworkConfig()
        self.cfg = cfg
        c = cfg.base_channels
        self.space = get_color_space(cfg.color_space)
        self.lfe = LightFeatureEstimator(c, use_complement=cfg.use_light_constraints)
        self.rfe = ReflectivityFeatureEstimator(c, cfg.heads_per_scale[0], use_reciprocal=cfg.use_light_constraints)
        self.color_embed = nn.Conv2d(3, c, 3, padding=1)
        self.dcgt = DCGT(cfg)
        self.to_e_star = None if cfg.use_output_constraint else nn.Conv2d(2 * c, c, 3, padding=1)
        self.chroma_head = nn.Conv2d(c, 2, 3, padding=1)
        self.brightness_head = nn.Conv2d(c, 1, 3, padding=1)
        # residual heads start unbiased so the untrained output is centred on the input
        with torch.no_grad():
            for head in (self.chroma_head, self.brightness_head):
                head.bias.zero_()

    def forward(self, img: torch.Tensor, return_all: bool = False):
        check_input_size(*img.shape[-2:])
        est = self.lfe(img)
        est.E_hat, est.L_prime_hat, est.R_hat, est.D = self.rfe(img, est.L_bar_hat)

        I_color = self.space.forward(img)
        F_c = self.color_embed(I_color)
        extras = {} if return_all else None
        R_star, e_star, F_c_star = self.dcgt(est.R_hat, est.e_hat, F_c, probes=extras)
        E_star = apply_output_constraint(R_star, e_star, est.alpha_hat, self.cfg.use_output_constraint, self.to_e_star)
        out = cam_assemble(F_c_star, E_star, I_color, self.chroma_head, self.brightness_head, self.cfg.color_space)
        if not return_all:
            return out[0]
        I_en, I_color_star, Y_color, I_brightness = out
        return TPCNetOutputs(
            I_en=I_en,
            I_color=I_color,
            I_color_star=I_color_star,
            estimates=est,
            F_c=F_c,
            R_star=R_star,
            e_star=e_star,
            F_c_star=F_c_star,
            E_star=E_star,
            Y_color=Y_color,
            I_brightness=I_brightness,
            extras=extras,
        )


def cam_assemble(F_c_star, E_star, I_color, chroma_head, brightness_head, space_id: str):
    """Map features to chroma/brightness, add the input color image back, and invert the transform.

    Returns ``(I_en, I_color_star, Y_color, I_brightness)``.
    """
    space = get_color_space(space_id)
    if I_color.shape[-3] != 3:
        raise ValueError("I_color must have 3 channels")
    Y_color = chroma_head(F_c_star)
    I_brightness = brightness_head(E_star)
    I_color_star = merge_channels(I_brightness, Y_color, space.luma_channel_index) + I_color
    I_en = space.inverse(I_color_star).clamp(0, 1)
    return I_en, I_color_star, Y_color, I_brightness


def tpcnet_forward(img, model: TPCNet):
    return model(img)


def build_model(cfg: NetworkConfig | None = None, seed: int = 0, dtype=torch.float32) -> TPCNet:
    """Construct a deterministically initialised network."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = TPCNet(cfg)
    return model.to(dtype)


def param_tree(model: nn.Module) -> dict[str, torch.Tensor]:
    """Ordered name -> tensor map of every learnable array."""
    return {name: p for name, p in model.named_parameters()}


def constraint_residuals(out: TPCNetOutputs, cfg: NetworkConfig) -> dict[str, float]:
    """Max abs violation of each wired identity; all exactly 0.0 when the flags are on."""
    est = out.estimates
    res = {}
    if cfg.use_light_constraints:
        res["light_split"] = (est.L_hat + est.L_bar_hat - est.e_hat).abs().max().item()
        expected_R = (est.E_hat - est.L_bar_hat / 2) * est.L_prime_hat
        res["reflectivity"] = (est.R_hat - expected_R).abs().max().item()
    if cfg.use_output_constraint:
        a = est.alpha_hat
        expected_E = a * out.e_star * out.R_star + (1 - a) * out.e_star / 2
        res["output"] = (out.E_star - expected_E).abs().max().item()
    return res
