from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from apps.cli.config import IMAGE_FORMATS, add_config_arguments, config_from_options
from apps.cli.paths import load_camera_path
from apps.cli.services import load_scene
from apps.render.services import render_frame
from apps.render.utils import save_image


def frame_path(output: str, frame: int, extension: str) -> Path:
    """``output`` is a ``{frame}`` pattern or a directory."""
    if "{" in output:
        return Path(output.format(frame=frame))
    return Path(output) / f"frame_{frame:04d}.{extension}"


class Command(BaseCommand):
    help = "Render a camera path to a numbered image sequence"

    def add_arguments(self, parser):
        parser.add_argument("packets", help=".pkt scene")
        parser.add_argument("path", help="camera path JSON (keyframe array)")
        parser.add_argument("output", help="output directory, or a pattern such as out/f{frame:03d}.png")
        parser.add_argument("--fps", type=float, help="frame rate (overrides the path file)")
        parser.add_argument("--image-format", dest="image_format", choices=IMAGE_FORMATS,
                            help="image format when OUTPUT is a directory")
        add_config_arguments(parser, build=False, render=True)

    def handle(self, *args, **options):
        try:
            config = config_from_options(options)
            path = load_camera_path(options["path"], config.fps or None)
        except (ValueError, OSError) as e:
            raise CommandError(str(e))
        try:
            scene, materials = load_scene(options["packets"], config)
        except (ValueError, OSError) as e:
            raise CommandError(f"{options['packets']}: {e}")

        output = options["output"]
        if "{" not in output:
            Path(output).mkdir(parents=True, exist_ok=True)
        params = config.render_params(materials)

        fb = None
        for frame, (position, look_at) in enumerate(path.poses()):
            try:
                camera = config.camera(position, look_at)
            except ValueError as e:
                raise CommandError(f"frame {frame}: {e}")
            fb, stats = render_frame(scene, camera, params, prev=fb, workers=config.workers)
            target = frame_path(output, frame, config.image_format)
            try:
                save_image(fb, target)
            except (ValueError, OSError) as e:
                raise CommandError(f"{target}: {e}")
            if config.stats:
                self.stdout.write(f"frame={frame} {stats.to_line()}")

        self.stdout.write(self.style.SUCCESS(f"wrote {path.frame_count} frames"))
