#!/usr/bin/env python3
"""Ray-cast a unit box ([-0.5, 0.5]^3) from 64 viewpoints and write a manifest.

Images are linear radiance PFMs of a Lambertian box under one point light plus
a constant ambient term, rendered with 4x4 supersampling on a black background.
The manifest stores row-major view / projection matrices (OpenGL clip space,
NDC y up, image row 0 at the top) with the light position and intensity.
"""

import argparse
import json
import os

import numpy as np

HALF = 0.5
ALBEDO = 0.6
AMBIENT = 0.05


def look_at(eye, target, up):
    f = target - eye
    f /= np.linalg.norm(f)
    s = np.cross(f, up)
    s /= np.linalg.norm(s)
    u = np.cross(s, f)
    m = np.eye(4)
    m[0, :3], m[1, :3], m[2, :3] = s, u, -f
    m[0, 3], m[1, 3], m[2, 3] = -s @ eye, -u @ eye, f @ eye
    return m


def perspective(fovy, aspect, near, far):
    f = 1.0 / np.tan(fovy / 2)
    m = np.zeros((4, 4))
    m[0, 0] = f / aspect
    m[1, 1] = f
    m[2, 2] = (far + near) / (near - far)
    m[2, 3] = 2 * far * near / (near - far)
    m[3, 2] = -1
    return m


def fibonacci_directions(n):
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + 5**0.5) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def render(view, proj, light_pos, light_intensity, size, ss):
    inv = np.linalg.inv(proj @ view)
    k = (np.arange(size * ss) + 0.5) / (size * ss)
    x = 2 * k - 1
    y = 1 - 2 * k
    xx, yy = np.meshgrid(x, y)
    ones = np.ones_like(xx)

    def unproject(z):
        p = np.stack([xx, yy, z * ones, ones], axis=-1) @ inv.T
        return p[..., :3] / p[..., 3:4]

    origin = unproject(-1.0)
    direction = unproject(1.0) - origin
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)

    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (-HALF - origin) / direction
        t1 = (HALF - origin) / direction
    t_near = np.nanmax(np.minimum(t0, t1), axis=-1)
    t_far = np.nanmin(np.maximum(t0, t1), axis=-1)
    hit = (t_near <= t_far) & (t_far > 0)

    p = origin + direction * t_near[..., None]
    axis = np.argmax(np.abs(p), axis=-1)
    normal = np.zeros_like(p)
    np.put_along_axis(normal, axis[..., None], np.sign(np.take_along_axis(p, axis[..., None], -1)), -1)

    to_light = light_pos - p
    d2 = np.sum(to_light**2, axis=-1)
    cos = np.maximum(np.sum(normal * to_light, axis=-1) / np.sqrt(d2), 0)
    radiance = (ALBEDO / np.pi) * cos[..., None] * light_intensity / d2[..., None] + AMBIENT * ALBEDO
    radiance[~hit] = 0

    return radiance.reshape(size, ss, size, ss, 3).mean(axis=(1, 3))


def write_pfm(path, img):
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(b"PF\n%d %d\n-1.0\n" % (w, h))
        f.write(np.ascontiguousarray(img[::-1], dtype="<f4").tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--size", type=int, default=96, help="image width and height")
    ap.add_argument("--views", type=int, default=64)
    ap.add_argument("--supersample", type=int, default=4, help="samples per pixel axis")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    fovy = np.radians(40.0)
    distance = 3.0
    proj = perspective(fovy, 1.0, 1.0, 6.0)
    records = []
    for i, d in enumerate(fibonacci_directions(args.views)):
        eye = distance * d
        up = np.array([0.0, 1.0, 0.0]) if abs(d[1]) < 0.95 else np.array([0.0, 0.0, 1.0])
        view = look_at(eye, np.zeros(3), up)
        light_pos = eye + 0.8 * up
        light_intensity = np.full(3, 3.0 * (light_pos @ light_pos))
        name = "view_%03d.pfm" % i
        img = render(view, proj, light_pos, light_intensity, args.size, args.supersample)
        write_pfm(os.path.join(args.out, name), img)
        records.append(
            {
                "view_matrix": view.flatten().tolist(),
                "proj_matrix": proj.flatten().tolist(),
                "light_pos": light_pos.tolist(),
                "light_intensity": light_intensity.tolist(),
                "image": name,
            }
        )
    with open(os.path.join(args.out, "manifest.json"), "w") as f:
        json.dump({"views": records}, f, indent=1)


if __name__ == "__main__":
    main()
