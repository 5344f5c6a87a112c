"""Pipeline steps shared by the management commands."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from apps.ingest.formats import parse_cloud
from apps.ingest.models import RawPoint, positions
from apps.ingest.ortho import read_ortho
from apps.packets.materials import MaterialTable, load_materials
from apps.packets.services import apply_class_policies, build_packets, mean_degree
from apps.packets.storage import read_packet_file, write_packets
from apps.render.models import Scene
from apps.sdf.models import load_templates
from apps.spatial.services import build_grid, chunks, estimate_cell_size
from .config import RenderConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class BuildSummary:
    cell_size: float
    packets: int
    chunks: int
    mean_degree: float

    def to_line(self) -> str:
        return (f"cell_size={self.cell_size:.6f} packets={self.packets} "
                f"chunks={self.chunks} mean_degree={self.mean_degree:.3f}")


def read_cloud(path: PathLike, fmt: str = "auto") -> list[RawPoint]:
    return parse_cloud(Path(path).read_bytes(), fmt)


def build_packet_file(points: list[RawPoint], config: RenderConfig,
                      ortho_path: Optional[PathLike] = None) -> tuple[bytes, BuildSummary]:
    """Grid → class policies → packets → chunks → ``.pkt`` bytes."""
    ortho = read_ortho(ortho_path) if ortho_path else None
    cell_size = config.cell_size or estimate_cell_size(positions(points))
    index = build_grid(points, cell_size, config.chunk_factor, scheme=config.class_map,
                       workers=config.workers)
    index = apply_class_policies(index, config.ground_as, config.low_veg_as_grass,
                                 config.low_veg_height)
    packets = build_packets(
        points, index, ortho=ortho, global_seed=config.global_seed,
        radius_max=config.radius_max, templates=load_templates(config.templates),
        materials=load_materials(config.templates), workers=config.workers,
    )
    chunk_list = chunks(index, packets)
    data = write_packets(packets, chunk_list, config.global_seed, cell_size, config.chunk_factor)
    return data, BuildSummary(cell_size, len(packets), len(chunk_list), mean_degree(packets))


def load_scene(path: PathLike, config: RenderConfig) -> tuple[Scene, MaterialTable]:
    f = read_packet_file(Path(path).read_bytes())
    logger.info("%s: %d packets, %d chunks", path, len(f.packets), len(f.chunks))
    return Scene(f.packets, f.chunks, load_templates(config.templates)), load_materials(config.templates)
