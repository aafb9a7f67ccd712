"""Dependency-light numeric kernels for the vision-language architecture.

Covers adaptive-resolution grid planning, the visual token budget with
feature-space pooling, bilinear resizing, token sequence layout and splicing,
the two-layer GELU projector, low-rank adapter forwards, and the masked
autoregressive loss. Everything is plain-Python floats so the arithmetic is
auditable; these kernels exist for verification, not throughput.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence

DEFAULT_TILE = 384
DEFAULT_MAX_TILES = 16
# one encoded tile is a 27x27 feature grid
DEFAULT_TOKENS_PER_TILE = 729
DEFAULT_TOKEN_BUDGET = 8748
GELU_CUBIC = 0.044715


class ShapeError(ValueError):
    pass


class DimMismatchError(ValueError):
    pass


class BudgetTooSmallError(ValueError):
    pass


class LengthMismatchError(ValueError):
    pass


class PositiveLogProbError(ValueError):
    def __init__(self, index: int, value: float):
        super().__init__(f"log-probability at {index} is positive: {value!r}")
        self.index = index
        self.value = value


@dataclass(frozen=True)
class TokenBudget:
    """Raw and pooled visual token counts for one tiling."""

    raw_total: int
    pooled_hw: tuple[int, int] | None
    pooled_total: int


@dataclass(frozen=True)
class VisionPlan:
    image_w: int
    image_h: int
    tile: int
    grid: tuple[int, int]
    tokens_per_tile: int
    raw_total: int
    pooled_hw: tuple[int, int] | None
    pooled_total: int
    budget: int


@dataclass
class FeatureMap:
    """A height x width x depth grid of feature vectors."""

    data: list

    def __post_init__(self):
        if not self.data or not self.data[0]:
            raise ShapeError("feature map must have positive height and width")
        width = len(self.data[0])
        depth = len(self.data[0][0]) if self.data[0][0] else 0
        if depth == 0:
            raise ShapeError("feature map must have positive depth")
        for row in self.data:
            if len(row) != width:
                raise ShapeError("feature map rows must share a width")
            for cell in row:
                if len(cell) != depth:
                    raise ShapeError("feature map cells must share a depth")
                for x in cell:
                    if not math.isfinite(x):
                        raise ShapeError(f"non-finite feature value {x!r}")

    @property
    def height(self) -> int:
        return len(self.data)

    @property
    def width(self) -> int:
        return len(self.data[0])

    @property
    def depth(self) -> int:
        return len(self.data[0][0])


@dataclass
class LoraAdapter:
    """Frozen base weights plus a scaled low-rank update."""

    w0: list
    a: list
    b: list
    alpha: float
    r: int

    @property
    def d_in(self) -> int:
        return len(self.w0)

    @property
    def d_out(self) -> int:
        return len(self.w0[0])

    @property
    def scale(self) -> float:
        return self.alpha / self.r

    @classmethod
    def fresh(cls, w0: list, r: int, alpha: float, seed: int = 0) -> "LoraAdapter":
        """Seeded Gaussian A, zero B, so the update starts as a no-op."""
        if r < 1:
            raise ShapeError(f"rank must be positive, got {r}")
        d_in = len(w0)
        d_out = len(w0[0])
        rng = random.Random(seed)
        a = [[rng.gauss(0.0, 0.02) for _ in range(r)] for _ in range(d_in)]
        b = [[0.0] * d_out for _ in range(r)]
        return cls(w0=w0, a=a, b=b, alpha=alpha, r=r)


@dataclass
class ProjectorWeights:
    """Two-layer MLP weights mapping vision features into the LLM width."""

    w1: list
    b1: list
    w2: list
    b2: list

    def __post_init__(self):
        if len(self.w1[0]) != len(self.b1) or len(self.b1) != len(self.w2):
            raise ShapeError("projector layer widths do not chain")
        if len(self.w2[0]) != len(self.b2):
            raise ShapeError("projector output width does not match bias")

    @property
    def d_v(self) -> int:
        return len(self.w1)

    @property
    def d_mid(self) -> int:
        return len(self.b1)

    @property
    def d_llm(self) -> int:
        return len(self.b2)


def plan_grid(
    image_w: int,
    image_h: int,
    tile: int = DEFAULT_TILE,
    max_tiles: int = DEFAULT_MAX_TILES,
) -> tuple[int, int]:
    """Choose the (rows, cols) tiling that best covers the image.

    Exhaustive over all grids with rows*cols <= max_tiles: maximize the
    covered area min(image, grid extent) per axis, then minimize wasted grid
    area, then prefer fewer tiles, squarer grids, and fewer rows, in that
    order. Deterministic by construction.
    """
    if image_w <= 0 or image_h <= 0:
        raise ValueError(f"image dimensions must be positive, got {image_w}x{image_h}")
    if tile <= 0:
        raise ValueError(f"tile size must be positive, got {tile}")
    if max_tiles < 1:
        raise ValueError(f"max_tiles must be >= 1, got {max_tiles}")
    best_key = None
    best_grid = (1, 1)
    for rows in range(1, max_tiles + 1):
        for cols in range(1, max_tiles // rows + 1):
            covered = min(image_w, cols * tile) * min(image_h, rows * tile)
            waste = (cols * tile) * (rows * tile) - covered
            key = (-covered, waste, rows * cols, abs(rows - cols), rows)
            if best_key is None or key < best_key:
                best_key = key
                best_grid = (rows, cols)
    return best_grid


def token_budget(
    grid: tuple[int, int],
    tokens_per_tile: int = DEFAULT_TOKENS_PER_TILE,
    budget: int = DEFAULT_TOKEN_BUDGET,
) -> TokenBudget:
    """Apply the visual token cap to a tiling.

    The raw sequence is (tiles + 1) * tokens_per_tile, the +1 being the
    global thumbnail. Over budget, every tile (never the thumbnail) is
    pooled square to side floor(sqrt((budget - tokens_per_tile) / tiles)).
    """
    rows, cols = grid
    if rows < 1 or cols < 1:
        raise ValueError(f"grid must be positive, got {grid}")
    side = math.isqrt(tokens_per_tile)
    if side * side != tokens_per_tile:
        raise ValueError(f"tokens_per_tile must be a square, got {tokens_per_tile}")
    if budget < tokens_per_tile:
        raise BudgetTooSmallError(
            f"budget {budget} cannot hold one {tokens_per_tile}-token thumbnail"
        )
    tiles = rows * cols
    raw_total = (tiles + 1) * tokens_per_tile
    if raw_total <= budget:
        return TokenBudget(raw_total=raw_total, pooled_hw=None, pooled_total=raw_total)
    pooled_side = math.isqrt((budget - tokens_per_tile) // tiles)
    if pooled_side < 1:
        raise BudgetTooSmallError(
            f"budget {budget} cannot hold {tiles} tiles even at one token each"
        )
    pooled_total = tokens_per_tile + tiles * pooled_side * pooled_side
    return TokenBudget(
        raw_total=raw_total,
        pooled_hw=(pooled_side, pooled_side),
        pooled_total=pooled_total,
    )


def vision_plan(
    image_w: int,
    image_h: int,
    tile: int = DEFAULT_TILE,
    max_tiles: int = DEFAULT_MAX_TILES,
    tokens_per_tile: int = DEFAULT_TOKENS_PER_TILE,
    budget: int = DEFAULT_TOKEN_BUDGET,
) -> VisionPlan:
    grid = plan_grid(image_w, image_h, tile=tile, max_tiles=max_tiles)
    counts = token_budget(grid, tokens_per_tile=tokens_per_tile, budget=budget)
    return VisionPlan(
        image_w=image_w,
        image_h=image_h,
        tile=tile,
        grid=grid,
        tokens_per_tile=tokens_per_tile,
        raw_total=counts.raw_total,
        pooled_hw=counts.pooled_hw,
        pooled_total=counts.pooled_total,
        budget=budget,
    )


def bilinear_resize(fmap: FeatureMap, out_h: int, out_w: int) -> FeatureMap:
    """Channel-wise bilinear interpolation, half-pixel-centre convention.

    Uses the lerp form a + (b - a) * t so constant maps are preserved
    exactly; edge samples clamp to the border pixel.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims must be positive, got {out_h}x{out_w}")
    in_h, in_w, depth = fmap.height, fmap.width, fmap.depth
    scale_y = in_h / out_h
    scale_x = in_w / out_w
    data = fmap.data
    out = []
    for i in range(out_h):
        src_y = (i + 0.5) * scale_y - 0.5
        y_floor = math.floor(src_y)
        wy = src_y - y_floor
        y0 = min(max(y_floor, 0), in_h - 1)
        y1 = min(max(y_floor + 1, 0), in_h - 1)
        row = []
        for j in range(out_w):
            src_x = (j + 0.5) * scale_x - 0.5
            x_floor = math.floor(src_x)
            wx = src_x - x_floor
            x0 = min(max(x_floor, 0), in_w - 1)
            x1 = min(max(x_floor + 1, 0), in_w - 1)
            cell = []
            for c in range(depth):
                v00 = data[y0][x0][c]
                v01 = data[y0][x1][c]
                v10 = data[y1][x0][c]
                v11 = data[y1][x1][c]
                top = v00 + (v01 - v00) * wx
                bottom = v10 + (v11 - v10) * wx
                cell.append(top + (bottom - top) * wy)
            row.append(cell)
        out.append(row)
    return FeatureMap(out)


def layout_sequence(global_map: FeatureMap, tiles: Sequence[FeatureMap]) -> list[list[float]]:
    """Flatten thumbnail-then-tiles into one token sequence, row-major."""
    depth = global_map.depth
    for index, tile_map in enumerate(tiles):
        if tile_map.depth != depth:
            raise DimMismatchError(
                f"tile {index} depth {tile_map.depth} != thumbnail depth {depth}"
            )
    sequence: list[list[float]] = []
    for fmap in (global_map, *tiles):
        for row in fmap.data:
            for cell in row:
                sequence.append(list(cell))
    return sequence


def splice_sequence(
    text_embeddings: Sequence[Sequence[float]],
    placeholder_index: int,
    visual_tokens: Sequence[Sequence[float]],
) -> list[list[float]]:
    """Replace the placeholder text row with the whole visual sequence."""
    n = len(text_embeddings)
    if not 0 <= placeholder_index < n:
        raise IndexError(f"placeholder index {placeholder_index} outside [0, {n})")
    out = [list(row) for row in text_embeddings[:placeholder_index]]
    out.extend(list(row) for row in visual_tokens)
    out.extend(list(row) for row in text_embeddings[placeholder_index + 1 :])
    return out


def _matvec(x: Sequence[float], matrix: Sequence[Sequence[float]]) -> list[float]:
    cols = len(matrix[0])
    return [
        math.fsum(x[i] * matrix[i][j] for i in range(len(x))) for j in range(cols)
    ]


def lora_forward(x: Sequence[float], adapter: LoraAdapter) -> list[float]:
    """h = x W0 + x A B * (alpha / r), exact dense arithmetic."""
    if len(x) != adapter.d_in:
        raise ShapeError(f"input width {len(x)} != adapter d_in {adapter.d_in}")
    if len(adapter.a) != adapter.d_in:
        raise ShapeError("A must have d_in rows")
    if len(adapter.b) != adapter.r or len(adapter.a[0]) != adapter.r:
        raise ShapeError("A columns and B rows must equal the rank")
    if len(adapter.b[0]) != adapter.d_out:
        raise ShapeError("B columns must equal d_out")
    base = _matvec(x, adapter.w0)
    through_a = _matvec(x, adapter.a)
    update = _matvec(through_a, adapter.b)
    scale = adapter.scale
    return [h + scale * u for h, u in zip(base, update)]


def gelu(x: float, exact: bool = False) -> float:
    """Gaussian error linear unit; tanh form by default, erf form on request."""
    if exact:
        return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))
    inner = math.sqrt(2.0 / math.pi) * (x + GELU_CUBIC * x * x * x)
    return 0.5 * x * (1.0 + math.tanh(inner))


def mlp_project(
    tokens: Sequence[Sequence[float]],
    weights: ProjectorWeights,
    exact_gelu: bool = False,
) -> list[list[float]]:
    """GELU(tokens W1 + b1) W2 + b2, row per token."""
    out = []
    for index, token in enumerate(tokens):
        if len(token) != weights.d_v:
            raise ShapeError(
                f"token {index} width {len(token)} != projector d_v {weights.d_v}"
            )
        pre = _matvec(token, weights.w1)
        hidden = [gelu(value + bias, exact=exact_gelu) for value, bias in zip(pre, weights.b1)]
        post = _matvec(hidden, weights.w2)
        out.append([value + bias for value, bias in zip(post, weights.b2)])
    return out


def masked_ce_loss(logprobs: Sequence[float], mask: Sequence[int]) -> float:
    """Negative sum of target log-probabilities where the mask is 1.

    Compensated summation keeps the full-sequence and split-mask sums in
    agreement to rounding error.
    """
    if len(logprobs) != len(mask):
        raise LengthMismatchError(
            f"{len(logprobs)} log-probabilities vs {len(mask)} mask entries"
        )
    for index, value in enumerate(logprobs):
        if value > 0:
            raise PositiveLogProbError(index, value)
    for index, bit in enumerate(mask):
        if bit not in (0, 1):
            raise ValueError(f"mask entry at {index} must be 0 or 1, got {bit!r}")
    return -math.fsum(lp for lp, bit in zip(logprobs, mask) if bit)
