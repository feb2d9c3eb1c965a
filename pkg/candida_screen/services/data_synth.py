"""
Gerador procedural de tiles e lâminas sintéticas.

Reproduz os fatores que dificultam a triagem de candida: hifas longas, finas e
de baixo contraste atravessando células dominantes, oclusão, confundidores
(bordas de células, dobras) e diferença de estilo entre lâminas.

A geometria depende apenas da semente; o estilo é aplicado no fim, então o
mesmo (seed, label) com estilos diferentes produz as mesmas caixas.
"""
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np
from skimage.color import hsv2rgb, rgb2hsv
from skimage.draw import disk, ellipse
from skimage.filters import gaussian
from skimage.transform import resize

from candida_screen.core.exceptions import DatasetError, ParameterError
from candida_screen.schemas.synth_schema import Box, Label, SlideManifest, StyleParams, SynthConfig, TileImage

MIN_TILE_SIZE = 64

# Cores base (RGB em [0,1]) antes da aplicação do estilo
CYTOPLASM_COLOR = np.array([0.80, 0.64, 0.76])
NUCLEUS_COLOR = np.array([0.45, 0.33, 0.58])
STROKE_DIRECTION = np.array([0.9, 1.0, 0.7])

# Escurecimento de uma hifa em relação ao fundo local; com contraste 1.3 e
# brilho 1.2 do estilo a diferença final fica <= 0.25
FILAMENT_DELTA = (0.10, 0.16)


def filament_width(size: int) -> float:
    """Largura do traço das hifas: 0.015·size, nunca abaixo de 1 px"""
    return max(1.0, 0.015 * size)


def stroke_coverage(points: np.ndarray, size: int, width: float) -> np.ndarray:
    """
    Cobertura anti-aliased em [0,1] de um traço de largura `width` ao longo dos pontos (x, y).

    cobertura = clip(width/2 + 0.5 - d, 0, 1), com d a distância do centro do
    pixel ao ponto mais próximo; a soma numa seção transversal é `width`.
    """
    half = width / 2.0
    reach = int(np.ceil(half + 1.0))
    distance = np.full((size, size), np.inf)
    for x, y in points:
        r0, c0 = max(0, int(np.floor(y)) - reach), max(0, int(np.floor(x)) - reach)
        r1, c1 = min(size, int(np.floor(y)) + reach + 2), min(size, int(np.floor(x)) + reach + 2)
        rr, cc = np.mgrid[r0:r1, c0:c1]
        window = distance[r0:r1, c0:c1]
        np.minimum(window, np.hypot(cc - x, rr - y), out=window)
    return np.clip(half + 0.5 - distance, 0.0, 1.0)


def _bezier(control: np.ndarray, t: np.ndarray) -> np.ndarray:
    p0, p1, p2, p3 = control
    t = t[:, None]
    return ((1 - t) ** 3) * p0 + 3 * ((1 - t) ** 2) * t * p1 + 3 * (1 - t) * (t ** 2) * p2 + (t ** 3) * p3


def _filament_path(rng: np.random.Generator, size: int) -> np.ndarray:
    """
    Sorteia o traçado de uma hifa: spline cúbica com corda >= 0.32·size e
    perturbação por segmento. Retorna pontos (x, y) espaçados < 0.5 px.
    """
    margin = 0.08 * size
    low, high = margin, size - margin
    center = np.array([size / 2.0, size / 2.0])

    for _ in range(1000):
        p0 = rng.uniform(low, high, size=2)
        base = np.arctan2(center[1] - p0[1], center[0] - p0[0])
        theta = base + rng.uniform(-0.6, 0.6)
        direction = np.array([np.cos(theta), np.sin(theta)])
        # distância até sair do quadrado [low, high]²
        with np.errstate(divide="ignore"):
            limits = [
                ((high if d > 0 else low) - p) / d
                for p, d in zip(p0, direction) if abs(d) > 1e-9
            ]
        t_max = min(limits)
        if t_max >= 0.34 * size:
            break
    else:  # pragma: no cover - o centro sempre oferece corda suficiente
        raise ParameterError("Não foi possível posicionar a hifa")

    length = rng.uniform(0.32 * size, t_max)
    p3 = p0 + length * direction
    normal = np.array([-direction[1], direction[0]])
    p1 = p0 + direction * length / 3 + normal * rng.uniform(-0.2, 0.2) * length
    p2 = p0 + direction * 2 * length / 3 + normal * rng.uniform(-0.2, 0.2) * length
    control = np.clip(np.stack([p0, p1, p2, p3]), low, high)

    n_points = int(4 * length) + 2
    t = np.linspace(0.0, 1.0, n_points)
    points = _bezier(control, t)

    n_segments = int(rng.integers(4, 9))
    knots = rng.uniform(-0.6, 0.6, size=n_segments + 1)
    offsets = np.interp(t, np.linspace(0.0, 1.0, n_segments + 1), knots)
    points = points + offsets[:, None] * normal
    return np.clip(points, 1.0, size - 2.0)


def _arc_path(rng: np.random.Generator, size: int) -> np.ndarray:
    """Arco curto de borda celular (confundidor), mais curto que qualquer hifa"""
    cx, cy = rng.uniform(0.15 * size, 0.85 * size, size=2)
    a = rng.uniform(0.05, 0.09) * size
    b = a * rng.uniform(0.6, 1.0)
    start = rng.uniform(0, 2 * np.pi)
    span = rng.uniform(0.8, 2.0)
    angles = np.linspace(start, start + span, int(2 * a * span) + 2)
    points = np.stack([cx + a * np.cos(angles), cy + b * np.sin(angles)], axis=1)
    return np.clip(points, 1.0, size - 2.0)


def _fold_path(rng: np.random.Generator, size: int) -> np.ndarray:
    """Linha de dobra reta atravessando o tile (confundidor)"""
    theta = rng.uniform(0, np.pi)
    offset = rng.uniform(-0.3, 0.3) * size
    direction = np.array([np.cos(theta), np.sin(theta)])
    normal = np.array([-direction[1], direction[0]])
    center = np.array([size / 2.0, size / 2.0]) + offset * normal
    t = np.linspace(-size, size, 4 * size)
    points = center + t[:, None] * direction
    inside = np.all((points >= 1.0) & (points <= size - 2.0), axis=1)
    return points[inside]


def _draw_cell(image: np.ndarray, rng: np.random.Generator, center: np.ndarray, size: int, alpha: float) -> None:
    a = rng.uniform(0.04, 0.085) * size
    b = a * rng.uniform(0.6, 1.0)
    rotation = rng.uniform(0, np.pi)
    shade = rng.uniform(0.95, 1.05)
    rr, cc = ellipse(center[1], center[0], b, a, shape=image.shape[:2], rotation=rotation)
    image[rr, cc] = (1 - alpha) * image[rr, cc] + alpha * np.clip(CYTOPLASM_COLOR * shade, 0, 1)
    rr, cc = disk((center[1], center[0]), 0.3 * b, shape=image.shape[:2])
    image[rr, cc] = (1 - alpha) * image[rr, cc] + alpha * NUCLEUS_COLOR


def _darken(image: np.ndarray, coverage: np.ndarray, delta: float) -> None:
    image -= (delta * coverage)[..., None] * STROKE_DIRECTION


def apply_style(image: np.ndarray, style: StyleParams) -> np.ndarray:
    """Aplica rotação de matiz, contraste e brilho do estilo da lâmina"""
    out = np.clip(image, 0.0, 1.0)
    if style.hue_shift:
        hsv = rgb2hsv(out)
        hsv[..., 0] = (hsv[..., 0] + style.hue_shift) % 1.0
        out = hsv2rgb(hsv)
    out = (out - 0.5) * style.contrast + 0.5
    out = out * style.brightness
    return np.clip(out, 0.0, 1.0)


def _as_style(style: Union[StyleParams, dict, None]) -> StyleParams:
    if style is None:
        return StyleParams()
    if isinstance(style, StyleParams):
        return style
    try:
        return StyleParams(**style)
    except ValueError as e:
        raise ParameterError(f"Estilo inválido: {e}") from e


@dataclass
class RenderedTile:
    """Tile antes do estilo e do ruído final, com a camada das hifas separada"""
    image: np.ndarray
    paths: List[np.ndarray]
    width: float
    darkness: np.ndarray
    boxes: List[Box]


def render_tile(
    seed: int, positive: bool, size: int, background_tint: Tuple[float, float, float] = StyleParams().background_tint
) -> RenderedTile:
    """
    Desenha a geometria de um tile: fundo, células, confundidores e hifas.

    A escuridão das hifas (`darkness`) é o máximo entre as hifas da
    cobertura × delta, então cruzamentos não somam contraste.
    """
    rng = np.random.default_rng(seed)
    image = np.empty((size, size, 3), dtype=np.float64)
    image[:] = np.asarray(background_tint)

    # textura de fundo de baixa frequência
    coarse = rng.normal(0.0, 1.0, size=(size // 8 + 1, size // 8 + 1))
    image += 0.015 * resize(coarse, (size, size), order=1, mode="edge", anti_aliasing=False)[..., None]

    width = filament_width(size)
    filaments = [_filament_path(rng, size) for _ in range(int(rng.integers(1, 4)))] if positive else []

    # células, algumas centradas sobre as hifas ("colar" de células)
    n_cells = int(rng.integers(10, 41))
    n_threaded = min(n_cells, int(rng.integers(2, 5))) if filaments else 0
    for i in range(n_cells):
        if i < n_threaded:
            path = filaments[i % len(filaments)]
            center = path[int(rng.integers(0, len(path)))] + rng.normal(0.0, 0.02 * size, size=2)
        else:
            center = rng.uniform(0, size, size=2)
        _draw_cell(image, rng, center, size, alpha=0.85)

    # confundidores
    n_arcs = int(rng.integers(1, 4)) if not positive else int(rng.integers(0, 2))
    for _ in range(n_arcs):
        _darken(image, stroke_coverage(_arc_path(rng, size), size, width), rng.uniform(*FILAMENT_DELTA))
    if not positive and rng.uniform() < 0.6:
        _darken(image, stroke_coverage(_fold_path(rng, size), size, 2.0 * width), rng.uniform(0.04, 0.08))

    image = gaussian(image, sigma=0.5, channel_axis=-1, preserve_range=True)

    darkness = np.zeros((size, size), dtype=np.float64)
    boxes: List[Box] = []
    for path in filaments:
        coverage = stroke_coverage(path, size, width)
        # esporos: pontos soltos logo após as extremidades, com o mesmo diâmetro do traço
        for end, inner in ((path[0], path[min(4, len(path) - 1)]), (path[-1], path[max(-5, -len(path))])):
            if rng.uniform() < 0.5:
                tangent = (end - inner) / max(float(np.hypot(*(end - inner))), 1e-9)
                spore = np.clip(end + 1.5 * width * tangent, 1.0, size - 2.0)
                np.maximum(coverage, stroke_coverage(spore[None, :], size, width), out=coverage)
        np.maximum(darkness, rng.uniform(*FILAMENT_DELTA) * coverage, out=darkness)
        ys, xs = np.nonzero(coverage)
        boxes.append((int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1))

    return RenderedTile(image=image, paths=filaments, width=width, darkness=darkness, boxes=boxes)


def gen_tile(
    seed: int,
    label: Union[Label, str],
    style: Union[StyleParams, dict, None] = None,
    size: int = 128,
    tile_id: str = "",
) -> TileImage:
    """
    Gera um tile sintético determinístico.

    Tiles positivos têm 1-3 hifas curvas (comprimento >= 0.3·size, largura
    <= 0.02·size, contraste <= 0.25) atravessando 10-40 células elípticas; as
    caixas envolvem cada hifa. Tiles negativos têm células e confundidores
    (arcos de borda celular, dobras) sem hifas.

    Args:
        seed: Semente (>= 0) que define toda a geometria e o ruído
        label: positive ou negative
        style: Estilo da lâmina (padrão: StyleParams())
        size: Lado do tile em pixels (>= 64)
        tile_id: Identificador gravado no tile

    Returns:
        TileImage: Tile com pixels em [0,1] e caixas das hifas

    Raises:
        ParameterError: tamanho, semente ou estilo inválidos
    """
    if size < MIN_TILE_SIZE:
        raise ParameterError(f"size deve ser >= {MIN_TILE_SIZE}, recebido {size}")
    if seed < 0:
        raise ParameterError(f"seed deve ser >= 0, recebido {seed}")
    style = _as_style(style)
    label = Label(label)

    rendered = render_tile(seed, label is Label.POSITIVE, size, style.background_tint)
    image = rendered.image.copy()
    _darken(image, rendered.darkness, 1.0)

    # oclusão parcial por células sobrepostas e ruído de aquisição
    rng = np.random.default_rng([seed, 1])
    if rendered.paths and rng.uniform() < 0.5:
        path = rendered.paths[0]
        _draw_cell(image, rng, path[int(rng.integers(0, len(path)))], size, alpha=0.5)
    image = image + rng.normal(0.0, 0.01, size=image.shape)
    image = apply_style(image, style)

    return TileImage(pixels=image, label=label, boxes=rendered.boxes, tile_id=tile_id)


def sample_style(rng: np.random.Generator) -> StyleParams:
    """Sorteia um estilo de lâmina dentro dos intervalos válidos"""
    return StyleParams(
        hue_shift=float(rng.uniform(-0.1, 0.1)),
        contrast=float(rng.uniform(0.7, 1.3)),
        brightness=float(rng.uniform(0.8, 1.2)),
        background_tint=tuple(float(c) for c in rng.uniform(0.86, 0.98, size=3)),
    )


@dataclass(frozen=True)
class TilePlan:
    """Receita de um tile do dataset: semente, rótulo e estilo"""
    tile_id: str
    seed: int
    label: Label
    style: StyleParams


@dataclass
class DatasetPlan:
    """Plano completo do dataset: tiles avulsos, tiles de lâminas e manifestos"""
    tiles: List[TilePlan]
    manifests: List[SlideManifest]

    def render(self, size: int) -> Iterator[TileImage]:
        for plan in self.tiles:
            yield gen_tile(plan.seed, plan.label, plan.style, size, tile_id=plan.tile_id)


def _exact_count(total: int, ratio: float) -> int:
    return int(np.floor(total * ratio + 0.5))


def plan_dataset(config: SynthConfig) -> DatasetPlan:
    """
    Planeja o dataset de forma determinística a partir da configuração.

    Três fluxos aleatórios independentes (rótulos/sementes, estilos, lâminas)
    garantem que trocar apenas o estilo não altera a geometria.

    Raises:
        DatasetError: configuração sem nenhum tile
    """
    if config.n_tiles == 0 and config.n_slides == 0:
        raise DatasetError("A configuração não gera nenhum tile (n_tiles e n_slides iguais a zero)")

    geometry_rng = np.random.default_rng([config.seed, 0])
    style_rng = np.random.default_rng([config.seed, 1])

    def next_style() -> StyleParams:
        sampled = sample_style(style_rng)
        return config.style if config.style is not None else sampled

    tiles: List[TilePlan] = []
    n_pos = _exact_count(config.n_tiles, config.positive_ratio)
    pool_labels = np.array([Label.POSITIVE] * n_pos + [Label.NEGATIVE] * (config.n_tiles - n_pos), dtype=object)
    pool_labels = pool_labels[geometry_rng.permutation(config.n_tiles)] if config.n_tiles else pool_labels
    for idx, label in enumerate(pool_labels):
        seed = int(geometry_rng.integers(0, 2 ** 31 - 1))
        tiles.append(TilePlan(f"t{idx:05d}", seed, label, next_style()))

    manifests: List[SlideManifest] = []
    n_pos_slides = _exact_count(config.n_slides, config.slide_positive_ratio)
    slide_labels = [Label.POSITIVE] * n_pos_slides + [Label.NEGATIVE] * (config.n_slides - n_pos_slides)
    order = geometry_rng.permutation(config.n_slides) if config.n_slides else []
    for slide_idx, label_idx in enumerate(order):
        slide_label = slide_labels[int(label_idx)]
        slide_id = f"s{slide_idx:03d}"
        style = next_style()
        positives = set()
        if slide_label is Label.POSITIVE:
            chosen = geometry_rng.choice(config.tiles_per_slide, size=config.positive_tiles_per_slide, replace=False)
            positives = {int(i) for i in chosen}
        tile_ids = []
        for j in range(config.tiles_per_slide):
            tile_id = f"{slide_id}_t{j:03d}"
            seed = int(geometry_rng.integers(0, 2 ** 31 - 1))
            label = Label.POSITIVE if j in positives else Label.NEGATIVE
            tiles.append(TilePlan(tile_id, seed, label, style))
            tile_ids.append(tile_id)
        manifests.append(SlideManifest(slide_id=slide_id, slide_label=slide_label, tile_ids=tile_ids, style=style))

    return DatasetPlan(tiles=tiles, manifests=manifests)


def check_manifest(manifest: SlideManifest, labels: dict) -> bool:
    """Lâmina positiva ⟺ pelo menos um tile positivo"""
    any_positive = any(Label(labels[t]) is Label.POSITIVE for t in manifest.tile_ids)
    return any_positive == (manifest.slide_label is Label.POSITIVE)
