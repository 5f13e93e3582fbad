"""Published benchmark scores used by the table-arithmetic acceptance check.

Each triple row is ``(label, precision, recall, f1)`` as printed (two decimals).
F1-only tables list ``(label, initial, adapted...)``.
"""

SINGLE_DATASET = [
    ("MEC single z-acc", 0.93, 0.92, 0.92),
    ("MEC 3 acc", 0.92, 0.92, 0.92),
    ("MEC 3 gyr", 0.92, 0.93, 0.92),
    ("MEC 3 acc + 3 gyr", 0.93, 0.92, 0.92),
    ("BioPoli single z-acc", 0.90, 0.87, 0.88),
    ("BioPoli 3 acc", 0.92, 0.90, 0.91),
    ("BioPoli 3 gyr", 0.93, 0.90, 0.91),
    ("BioPoli 3 acc + 3 gyr", 0.93, 0.92, 0.92),
    ("CEBS single z-acc", 0.95, 0.93, 0.94),
]

CROSS_DATASET = [
    ("MEC -> MEC (single)", 0.93, 0.92, 0.92),
    ("MEC -> MEC (multi)", 0.93, 0.92, 0.92),
    ("MEC -> CEBS", 0.95, 0.97, 0.95),
    ("MEC -> BioPoli (single)", 0.86, 0.82, 0.84),
    ("MEC -> BioPoli (multi)", 0.83, 0.79, 0.81),
    ("CEBS -> CEBS", 0.95, 0.93, 0.94),
    ("CEBS -> MEC", 0.90, 0.89, 0.89),
    ("CEBS -> BioPoli", 0.84, 0.82, 0.83),
    ("BioPoli -> BioPoli (single)", 0.90, 0.87, 0.88),
    ("BioPoli -> BioPoli (multi)", 0.93, 0.92, 0.92),
    ("BioPoli -> MEC (single)", 0.91, 0.87, 0.88),
    ("BioPoli -> MEC (multi)", 0.94, 0.93, 0.93),
    ("BioPoli -> CEBS", 0.88, 0.88, 0.88),
    ("MEC+CEBS -> BioPoli", 0.87, 0.86, 0.86),
    ("MEC+BioPoli -> CEBS", 0.95, 0.98, 0.96),
    ("BioPoli+CEBS -> MEC", 0.91, 0.91, 0.91),
]

# (label, initial F1, personalized F1, printed gain in percentage points or None)
PERSONALIZATION = [
    ("CEBS", 0.94, 0.95, 1),
    ("MEC (single)", 0.92, 0.92, None),
    ("MEC (multi)", 0.92, 0.93, 1),
    ("BioPoli (single)", 0.88, 0.93, 5),
    ("BioPoli (multi)", 0.92, 0.95, 3),
]

# (train-test, initial, fine-tuned or None, personalized); BioPoli test, single channel
ADAPTATION = [
    ("BioPoli-BioPoli", 0.88, None, 0.91),
    ("CEBS-BioPoli", 0.83, 0.89, 0.89),
    ("MEC-BioPoli", 0.84, 0.88, 0.89),
    ("CEBS+MEC-BioPoli", 0.86, 0.90, 0.91),
]

# the unadapted F1 of an F1-only row is the F1 of this triple row
INITIAL_SOURCES = {
    ("PERSONALIZATION", "CEBS"): ("SINGLE_DATASET", "CEBS single z-acc"),
    ("PERSONALIZATION", "MEC (single)"): ("SINGLE_DATASET", "MEC single z-acc"),
    ("PERSONALIZATION", "MEC (multi)"): ("SINGLE_DATASET", "MEC 3 acc + 3 gyr"),
    ("PERSONALIZATION", "BioPoli (single)"): ("SINGLE_DATASET", "BioPoli single z-acc"),
    ("PERSONALIZATION", "BioPoli (multi)"): ("SINGLE_DATASET", "BioPoli 3 acc + 3 gyr"),
    ("ADAPTATION", "BioPoli-BioPoli"): ("CROSS_DATASET", "BioPoli -> BioPoli (single)"),
    ("ADAPTATION", "CEBS-BioPoli"): ("CROSS_DATASET", "CEBS -> BioPoli"),
    ("ADAPTATION", "MEC-BioPoli"): ("CROSS_DATASET", "MEC -> BioPoli (single)"),
    ("ADAPTATION", "CEBS+MEC-BioPoli"): ("CROSS_DATASET", "MEC+CEBS -> BioPoli"),
}
