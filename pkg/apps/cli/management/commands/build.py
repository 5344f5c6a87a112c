from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from apps.cli.config import add_config_arguments, config_from_options
from apps.cli.services import build_packet_file, read_cloud


class Command(BaseCommand):
    help = "Amplify a point cloud into render packets (.pkt)"

    def add_arguments(self, parser):
        parser.add_argument("cloud", help="point cloud (.xyzc or .pamp)")
        parser.add_argument("output", help="destination .pkt file")
        add_config_arguments(parser, build=True, render=False)

    def handle(self, *args, **options):
        try:
            config = config_from_options(options)
            points = read_cloud(options["cloud"])
        except (ValueError, OSError) as e:
            raise CommandError(f"{options['cloud']}: {e}")

        try:
            data, summary = build_packet_file(points, config, config.ortho or None)
            Path(options["output"]).write_bytes(data)
        except (ValueError, OSError) as e:
            raise CommandError(str(e))

        self.stdout.write(self.style.SUCCESS(summary.to_line()))
