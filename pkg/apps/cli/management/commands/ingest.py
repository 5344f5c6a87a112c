from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from apps.ingest.classmaps import map_classes
from apps.ingest.formats import write_packed_binary
from apps.ingest.models import class_codes
from apps.packets.services import class_histogram
from apps.cli.services import read_cloud


class Command(BaseCommand):
    help = "Parse a .xyzc or .pamp point cloud and write it as .pamp"

    def add_arguments(self, parser):
        parser.add_argument("input", help="point cloud (.xyzc text or .pamp binary)")
        parser.add_argument("output", help="destination .pamp file")
        parser.add_argument("--format", choices=["auto", "xyzc", "pamp"], default="auto",
                            help="input format (default: sniff the magic bytes)")
        parser.add_argument("--class-map", default=settings.POINTAMP["CLASS_MAP"],
                            help="scheme used for the class histogram")

    def handle(self, *args, **options):
        try:
            points = read_cloud(options["input"], options["format"])
            histogram = class_histogram(map_classes(class_codes(points), options["class_map"]))
        except (ValueError, OSError) as e:
            raise CommandError(f"{options['input']}: {e}")

        try:
            Path(options["output"]).write_bytes(write_packed_binary(points))
        except OSError as e:
            raise CommandError(f"{options['output']}: {e}")

        self.stdout.write(self.style.SUCCESS(f"points={len(points)}"))
        for category, count in histogram.items():
            self.stdout.write(f"class.{category.label}={count}")
