"""Object classes and their size priors (mean l, w, h in meters)."""

VEHICLE = 1
PEDESTRIAN = 2
CYCLIST = 3

CLASS_NAMES = {VEHICLE: "Vehicle", PEDESTRIAN: "Pedestrian", CYCLIST: "Cyclist"}

SIZE_PRIORS = {
    VEHICLE: (4.7, 2.1, 1.7),
    PEDESTRIAN: (0.9, 0.85, 1.75),
    CYCLIST: (1.8, 0.8, 1.75),
}


def class_name(class_id: int) -> str:
    return CLASS_NAMES.get(class_id, f"class_{class_id}")
