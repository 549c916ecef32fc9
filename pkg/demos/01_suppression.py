"""Overlap-proportion suppression versus plain NMS on a hand-made scene.

A detector prompted with "the sedan is mostly red and its front shows a logo"
tends to return the car and, separately, the logo on its grille. IoU between
a car and its logo is tiny, so NMS keeps both. The overlap ratio of the logo
inside the car is 1.0, so the caption-level filter removes it.
"""
from ovdbench import Box, Prediction
from ovdbench.geometry import iou, overlap_ratio
from ovdbench.postprocess import PRESETS, SuppressionConfig, standard_nms, suppress_caption

car = Prediction(1, Box(100, 200, 700, 560), 0.91, "sedan", 1)
logo = Prediction(1, Box(370, 420, 430, 460), 0.62, "logo", 1)
tiny = Prediction(1, Box(10, 10, 18, 16), 0.40, "text", 1)
second_car = Prediction(1, Box(650, 220, 1150, 600), 0.85, "sedan", 1)
preds = [car, logo, tiny, second_car]

print(f"IoU(logo, car)           = {iou(logo.box, car.box):.4f}")
print(f"overlap_ratio(logo, car) = {overlap_ratio(logo.box, car.box):.4f}")
print(f"overlap_ratio(car, logo) = {overlap_ratio(car.box, logo.box):.4f}")

print("\nstandard NMS at IoU 0.5 keeps:")
for p in standard_nms(preds, 0.5):
    print(f"  {p.token:<6} {p.box.to_list()} score {p.score}")

print("\noverlap suppression, threshold 0.8, no size limits, keeps:")
for p in suppress_caption(preds, SuppressionConfig(0.8)):
    print(f"  {p.token:<6} {p.box.to_list()} score {p.score}")

cfg = PRESETS["c"]
print(f"\nvehicle preset (min {cfg.min_width:g}x{cfg.min_height:g}, max {cfg.max_width:g}x{cfg.max_height:g}) also drops the 8x6 text box:")
for p in suppress_caption(preds, cfg):
    print(f"  {p.token:<6} {p.box.to_list()} score {p.score}")
