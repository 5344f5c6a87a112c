from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from apps.ingest import synthetic
from apps.ingest.formats import write_packed_binary, write_xyzc


class Command(BaseCommand):
    help = "Write a seeded synthetic DALES-coded cloud (test fixtures; not for production data)"

    def add_arguments(self, parser):
        parser.add_argument("kind", choices=["tile", "cluster", "wall"])
        parser.add_argument("output", help=".xyzc or .pamp path")
        parser.add_argument("--points", type=int, default=100_000, help="tile size in points")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--spacing", type=float, default=1.0, help="cluster point spacing (m)")

    def handle(self, *args, **options):
        kind = options["kind"]
        if kind == "tile":
            if options["points"] < 1:
                raise CommandError("--points must be >= 1")
            points = synthetic.generate_tile(options["points"], options["seed"])
        elif kind == "cluster":
            points = synthetic.generate_cluster(options["spacing"])
        else:
            points = synthetic.generate_wall(seed=options["seed"])

        output = Path(options["output"])
        data = write_packed_binary(points) if output.suffix == ".pamp" else write_xyzc(points)
        try:
            output.write_bytes(data)
        except OSError as e:
            raise CommandError(f"{output}: {e}")
        self.stdout.write(self.style.SUCCESS(f"{kind}: {len(points)} points -> {output}"))
