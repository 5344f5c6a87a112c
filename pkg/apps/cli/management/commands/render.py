from django.core.management.base import BaseCommand, CommandError

from apps.cli.config import add_config_arguments, config_from_options
from apps.cli.services import load_scene
from apps.render.services import render_frame
from apps.render.utils import save_image


class Command(BaseCommand):
    help = "Render one view of a .pkt scene to .ppm or .png"

    def add_arguments(self, parser):
        parser.add_argument("packets", help=".pkt scene")
        parser.add_argument("output", help="image path (.ppm or .png)")
        parser.add_argument("--frames", type=int,
                            help="render the pose this many times, each frame reusing the "
                                 "previous depth; the last frame is written")
        add_config_arguments(parser, build=False, render=True)

    def handle(self, *args, **options):
        try:
            config = config_from_options(options)
            camera = config.camera()
        except ValueError as e:
            raise CommandError(str(e))

        try:
            scene, materials = load_scene(options["packets"], config)
        except (ValueError, OSError) as e:
            raise CommandError(f"{options['packets']}: {e}")

        params = config.render_params(materials)
        fb = None
        for _ in range(config.frames):
            fb, stats = render_frame(scene, camera, params, prev=fb, workers=config.workers)
            if config.stats:
                self.stdout.write(stats.to_line())

        try:
            save_image(fb, options["output"])
        except (ValueError, OSError) as e:
            raise CommandError(f"{options['output']}: {e}")
        self.stdout.write(self.style.SUCCESS(f"wrote {options['output']}"))
