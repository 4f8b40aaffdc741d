"""Integer rasterisation onto 8-bit grayscale frames. No anti-aliasing."""

import math

import numpy as np

FOREGROUND = 255


def to_pixel(value):
    """Round half up; used for every continuous-to-pixel conversion."""
    return int(math.floor(value + 0.5))


def blank(height, width):
    return np.zeros((height, width), dtype=np.uint8)


def bresenham(x0, y0, x1, y1):
    """Integer points of the segment (x0, y0)-(x1, y1), endpoints included."""
    points = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return points


def _put(frame, x, y):
    height, width = frame.shape
    if 0 <= x < width and 0 <= y < height:
        frame[y, x] = FOREGROUND


def draw_line(frame, x0, y0, x1, y1, thickness=3):
    """
    Thick line: each Bresenham point is widened along the minor axis, so the
    stroke is ``thickness`` pixels across in rows or columns.
    """
    half = thickness // 2
    x_major = abs(x1 - x0) >= abs(y1 - y0)
    for x, y in bresenham(x0, y0, x1, y1):
        for offset in range(-half, thickness - half):
            if x_major:
                _put(frame, x, y + offset)
            else:
                _put(frame, x + offset, y)


def draw_disc(frame, cx, cy, radius):
    height, width = frame.shape
    rows, cols = np.ogrid[:height, :width]
    mask = (rows - cy) ** 2 + (cols - cx) ** 2 <= radius * radius
    frame[mask] = FOREGROUND


def fill_rect(frame, x0, y0, x1, y1):
    """Fill columns x0..x1-1 and rows y0..y1-1, clipped to the frame."""
    height, width = frame.shape
    frame[max(y0, 0):min(y1, height), max(x0, 0):min(x1, width)] = FOREGROUND


def draw_row(frame, y):
    if 0 <= y < frame.shape[0]:
        frame[y, :] = FOREGROUND
