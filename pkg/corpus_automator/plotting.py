import io
import os
from typing import Dict, Optional, Sequence, Tuple

from PIL import Image, ImageDraw, ImageFont

from .asrfilter import HistogramBin
from .logging_setup import logger
from .utils import atomic_write_bytes


class HistogramRenderer:
    """Bar chart rendering of score histograms as PNG."""

    FONT_PATHS = [
        "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
        "/usr/share/fonts/truetype/liberation/LiberationSans-Regular.ttf",
        "/System/Library/Fonts/Helvetica.ttc",
        "C:/Windows/Fonts/arial.ttf",
    ]

    def __init__(self, width: int = 800, height: int = 480, margin: int = 60):
        self.width = width
        self.height = height
        self.margin = margin
        self.font_cache: Dict[int, ImageFont.ImageFont] = {}
        self._load_fonts()

    def _load_fonts(self):
        """Load and cache fonts for labels."""
        for size in (12, 16):
            for font_path in self.FONT_PATHS:
                try:
                    if os.path.exists(font_path):
                        self.font_cache[size] = ImageFont.truetype(font_path, size)
                        break
                except OSError:
                    continue
            if size not in self.font_cache:
                self.font_cache[size] = ImageFont.load_default()

    def render(self, bins: Sequence[HistogramBin], title: str = "",
               markers: Sequence[Tuple[float, str]] = ()) -> Image.Image:
        """Draw bars for ``bins`` and vertical lines at ``markers`` (value, label)."""
        image = Image.new("RGB", (self.width, self.height), "white")
        draw = ImageDraw.Draw(image)
        left, top = self.margin, self.margin
        right, bottom = self.width - self.margin // 2, self.height - self.margin

        draw.line([(left, bottom), (right, bottom)], fill="black")
        draw.line([(left, top), (left, bottom)], fill="black")
        if title:
            draw.text((left, top // 3), title, fill="black", font=self.font_cache[16])
        if not bins:
            draw.text((left + 10, (top + bottom) // 2), "no scores", fill="gray", font=self.font_cache[16])
            return image

        lo = min([b.lower for b in bins] + [m for m, _ in markers])
        hi = max([b.upper for b in bins] + [m for m, _ in markers])
        span = (hi - lo) or 1.0
        peak = max(b.count for b in bins)

        def x_of(value: float) -> int:
            return int(round(left + (value - lo) / span * (right - left)))

        for b in bins:
            bar_top = bottom - int(round(b.count / peak * (bottom - top)))
            draw.rectangle([x_of(b.lower), bar_top, max(x_of(b.upper) - 1, x_of(b.lower)), bottom],
                           fill=(70, 110, 180), outline=(40, 60, 110))

        for value, label in markers:
            x = x_of(value)
            draw.line([(x, top), (x, bottom)], fill=(200, 40, 40), width=2)
            draw.text((x + 3, top), label, fill=(200, 40, 40), font=self.font_cache[12])

        font = self.font_cache[12]
        draw.text((left, bottom + 8), f"{lo:g}", fill="black", font=font)
        draw.text((right - 40, bottom + 8), f"{hi:g}", fill="black", font=font)
        draw.text((4, top), str(peak), fill="black", font=font)
        return image

    def save_png(self, image: Image.Image, file_path: str):
        buffer = io.BytesIO()
        image.save(buffer, format="PNG", optimize=True, compress_level=6)
        atomic_write_bytes(file_path, buffer.getvalue())
        logger.info(f"Histogram written to {file_path}")


def save_histogram_png(bins: Sequence[HistogramBin], file_path: str, title: str = "",
                       markers: Optional[Sequence[Tuple[float, str]]] = None):
    renderer = HistogramRenderer()
    renderer.save_png(renderer.render(bins, title, markers or ()), file_path)
