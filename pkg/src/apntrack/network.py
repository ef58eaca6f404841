"""The tracking network: shared-weight feature extraction for template and
search patches, anchor proposal from mid-level features, fusion of the
two correlation maps, and the classification/regression heads.
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .config import ModelConfig
from .errors import ConfigError, ShapeError
from .geometry import GridGeometry


class Conv:
    """Convolution layer owning its weight and bias parameters."""

    def __init__(self, name, in_ch, out_ch, kernel, stride=1, padding=0, rng=None):
        self.name = name
        self.stride = stride
        self.padding = padding
        # relu-gain uniform init: keeps activation scale roughly constant
        # through conv+relu stacks, which the correlation layers (products
        # of two feature maps) depend on to stay well-conditioned
        fan_in = in_ch * kernel * kernel
        limit = np.sqrt(6.0 / fan_in)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = ag.parameter(rng.uniform(-limit, limit, (out_ch, in_ch, kernel, kernel)))
        self.bias = ag.parameter(np.zeros(out_ch))

    def __call__(self, x):
        return ag.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def named_parameters(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


@dataclass
class NetworkOutputs:
    """All head maps from one forward pass, each (batch, channels, h, w)."""

    anchor_map: ag.Tensor  # (B, 4, h, w) proposal corner offsets
    cls1: ag.Tensor        # (B, 2, h, w) anchor-quality logits
    cls2: ag.Tensor        # (B, 2, h, w) point-in-box logits
    cls3: ag.Tensor        # (B, 1, h, w) centerness, sigmoid-activated
    loc: ag.Tensor         # (B, 4, h, w) refinement offsets


def _align_conv_shape(src, dst):
    """Kernel/stride/padding for a conv mapping spatial size src to dst."""
    if src == dst:
        return 3, 1, 1
    for stride in (1, 2, 3, 4):
        for kernel in (1, 2, 3, 4, 5, 6, 7):
            for padding in (0, 1, 2, 3):
                if src + 2 * padding - kernel < 0:
                    continue
                if (src + 2 * padding - kernel) // stride + 1 == dst:
                    return kernel, stride, padding
    raise ConfigError(
        f"no integral conv configuration aligns response sizes {src} -> {dst}"
    )


class TrackNet:
    """Two-stage tracking network over 4-D float tensors.

    The template and search branches share every backbone parameter;
    feature maps are tapped after block 4 (mid) and block 5 (deep).
    """

    def __init__(self, cfg: ModelConfig = None, seed: int = 0):
        self.cfg = cfg if cfg is not None else ModelConfig()
        cfg = self.cfg
        rng = np.random.default_rng(seed)

        mid_size, deep_size = cfg.response_size()
        if mid_size < 1 or deep_size < 1:
            raise ConfigError("template feature map larger than search feature map")
        mid_ch = cfg.channels[3]
        deep_ch = cfg.channels[4]
        fus_ch = cfg.fusion_channels

        self.blocks = []
        in_ch = cfg.in_channels
        for idx, (out_ch, k, s) in enumerate(zip(cfg.channels, cfg.kernels, cfg.strides)):
            self.blocks.append(Conv(f"backbone.block{idx + 1}", in_ch, out_ch, k, s, 0, rng))
            in_ch = out_ch

        self.apn_adjust_search = Conv("apn.adjust_search", mid_ch, mid_ch, 3, 1, 1, rng)
        self.apn_adjust_template = Conv("apn.adjust_template", mid_ch, mid_ch, 3, 1, 1, rng)
        self.apn_head = Conv("apn.anchor_head", mid_ch, 4, 3, 1, 1, rng)
        # proposal offsets are emitted in units of the stride: the head
        # learns O(1) values while the map stays in pixels, and the bias
        # starts proposals as plausible boxes instead of degenerate ones
        self.offset_scale = float(cfg.total_stride)
        self.apn_head.bias.data[:] = 2.0

        self.fusion_adjust_search = Conv("fusion.adjust_search", deep_ch, deep_ch, 3, 1, 1, rng)
        self.fusion_adjust_template = Conv("fusion.adjust_template", deep_ch, deep_ch, 3, 1, 1, rng)
        self.fusion_deep = Conv("fusion.merge_deep", deep_ch, fus_ch, 3, 1, 1, rng)
        k6, s6, p6 = _align_conv_shape(mid_size, deep_size)
        self.fusion_mid = Conv("fusion.merge_mid", mid_ch, fus_ch, k6, s6, p6, rng)
        self.fusion_reduce = Conv("fusion.reduce", 2 * fus_ch, fus_ch, 1, 1, 0, rng)

        self.cls_trunk = Conv("heads.cls_trunk", fus_ch, fus_ch, 3, 1, 1, rng)
        self.head_cls1 = Conv("heads.cls1", fus_ch, 2, 1, 1, 0, rng)
        self.head_cls2 = Conv("heads.cls2", fus_ch, 2, 1, 1, 0, rng)
        self.head_cls3 = Conv("heads.cls3", fus_ch, 1, 1, 1, 0, rng)
        self.loc_trunk = Conv("heads.loc_trunk", fus_ch, fus_ch, 3, 1, 1, rng)
        self.head_loc = Conv("heads.loc", fus_ch, 4, 1, 1, 0, rng)

        self._layers = self.blocks + [
            self.apn_adjust_search, self.apn_adjust_template, self.apn_head,
            self.fusion_adjust_search, self.fusion_adjust_template,
            self.fusion_deep, self.fusion_mid, self.fusion_reduce,
            self.cls_trunk, self.head_cls1, self.head_cls2, self.head_cls3,
            self.loc_trunk, self.head_loc,
        ]
        self.template_calls = 0  # instrumentation for the caching contract

    # -- parameters ----------------------------------------------------

    def named_parameters(self):
        out = []
        for layer in self._layers:
            out.extend(layer.named_parameters())
        return out

    def parameter_count(self):
        return sum(p.data.size for _, p in self.named_parameters())

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ShapeError(f"parameter names mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(f"parameter '{name}' shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()

    # -- geometry ------------------------------------------------------

    def grid_geometry(self):
        # the mid-level map is aligned onto the deep one, so every head
        # map shares the deep correlation size and the backbone stride
        _, size = self.cfg.response_size()
        return GridGeometry(
            w_s=self.cfg.search_size, h_s=self.cfg.search_size,
            s=self.cfg.total_stride, w=size, h=size,
        )

    # -- forward -------------------------------------------------------

    def extract_features(self, patch, branch):
        """Backbone features (mid, deep) for one branch; weights are shared."""
        expected = self.cfg.template_size if branch == "template" else self.cfg.search_size
        if patch.shape[2] != expected or patch.shape[3] != expected:
            raise ShapeError(
                f"{branch} patch is {patch.shape[2]}x{patch.shape[3]}, expected {expected}"
            )
        if branch == "template":
            self.template_calls += 1
        h = patch
        taps = []
        for block in self.blocks:
            h = ag.relu(block(h))
            taps.append(h)
        return taps[3], taps[4]

    def make_template_cache(self, template_patch):
        """Run the template branch once; reuse the result across updates."""
        mid_z, deep_z = self.extract_features(template_patch, "template")
        return {
            "apn": ag.relu(self.apn_adjust_template(mid_z)),
            "fusion": ag.relu(self.fusion_adjust_template(deep_z)),
        }

    def apn_forward(self, mid_x, adjusted_mid_z):
        """First-stage similarity map and proposal offsets."""
        ax = ag.relu(self.apn_adjust_search(mid_x))
        sim_mid = ag.dw_xcorr(ax, adjusted_mid_z)
        offsets = ag.scale(self.apn_head(sim_mid), self.offset_scale)
        return sim_mid, offsets

    def fusion_forward(self, deep_x, adjusted_deep_z, sim_mid):
        """Fuse the deep similarity map with the first-stage map."""
        fx = ag.relu(self.fusion_adjust_search(deep_x))
        sim_deep = ag.dw_xcorr(fx, adjusted_deep_z)
        merged = ag.concat_channels(
            ag.relu(self.fusion_deep(sim_deep)),
            ag.relu(self.fusion_mid(sim_mid)),
        )
        return ag.relu(self.fusion_reduce(merged))

    def heads_forward(self, fused):
        c = ag.relu(self.cls_trunk(fused))
        l = ag.relu(self.loc_trunk(fused))
        return (
            self.head_cls1(c),
            self.head_cls2(c),
            ag.sigmoid(self.head_cls3(c)),
            self.head_loc(l),
        )

    def forward_search(self, search_patch, cache):
        mid_x, deep_x = self.extract_features(search_patch, "search")
        sim_mid, offsets = self.apn_forward(mid_x, cache["apn"])
        fused = self.fusion_forward(deep_x, cache["fusion"], sim_mid)
        cls1, cls2, cls3, loc = self.heads_forward(fused)
        maps = (offsets, cls1, cls2, cls3, loc)
        sizes = {m.shape[2:] for m in maps}
        if len(sizes) != 1:
            raise ShapeError(f"head maps disagree on spatial size: {sorted(sizes)}")
        return NetworkOutputs(offsets, cls1, cls2, cls3, loc)

    def full_forward(self, template_patch, search_patch):
        cache = self.make_template_cache(template_patch)
        return self.forward_search(search_patch, cache)
