from django.core.management.base import BaseCommand, CommandError

from apps.packets.services import (
    class_histogram, degree_histogram, radius_percentiles,
)
from apps.packets.storage import read_packet_file


class Command(BaseCommand):
    help = "Summarise a .pkt file: counts, classes, adjacency degrees, bounding radii"

    def add_arguments(self, parser):
        parser.add_argument("packets", help=".pkt file")

    def handle(self, *args, **options):
        try:
            with open(options["packets"], "rb") as fh:
                f = read_packet_file(fh)
        except (ValueError, OSError) as e:
            raise CommandError(f"{options['packets']}: {e}")

        self.stdout.write(f"packets={len(f.packets)} chunks={len(f.chunks)} "
                          f"cell_size={f.cell_size!r} chunk_factor={f.chunk_factor} "
                          f"seed={f.global_seed}")
        for category, count in class_histogram(p.category for p in f.packets).items():
            self.stdout.write(f"class.{category.label}={count}")
        for degree, count in enumerate(degree_histogram(f.packets)):
            self.stdout.write(f"degree.{degree}={count}")
        for q, value in radius_percentiles(f.packets).items():
            self.stdout.write(f"radius.p{q:g}={value:.6f}")
