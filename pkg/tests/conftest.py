import pytest

from odd_audit.odd import OperationalDesignDomain, PromptTemplate, SemanticDimension
from odd_audit.synthworld import EmbeddingWorld


@pytest.fixture(scope="session")
def car_odd() -> OperationalDesignDomain:
    """100-subgroup benchmark domain; must stay in sync with configs/car-bench.toml."""
    return OperationalDesignDomain(
        dimensions=(
            SemanticDimension("color", ("black", "white", "red", "green", "blue")),
            SemanticDimension(
                "background", ("forest", "desert", "city", "mountain", "beach")
            ),
            SemanticDimension("type", ("van", "SUV", "sedan", "cabriolet")),
        ),
        source_class="car",
        target_classes=("truck",),
    )


@pytest.fixture(scope="session")
def car_template() -> PromptTemplate:
    return PromptTemplate(
        "An image of a {color} {type} {class} with a {background} background.",
        class_weight=1.5,
    )


@pytest.fixture(scope="session")
def car_coverage_template() -> PromptTemplate:
    return PromptTemplate(
        "An image of a {color} {type} {class} with a {background} background.",
        class_weight=1.0,
    )


@pytest.fixture(scope="session")
def bench_world(car_odd) -> EmbeddingWorld:
    """Contaminated world for rank-recovery runs; heavy enough that the
    median's robustness is load-bearing."""
    return EmbeddingWorld.for_odd(
        car_odd, noise_sigma=0.05, oos_rate=0.3, ooc_rate=0.1, seed=11
    )


@pytest.fixture(scope="session")
def coverage_world(car_odd) -> EmbeddingWorld:
    """World whose swap rate is tuned for ~0.89 prompt fidelity."""
    return EmbeddingWorld.for_odd(
        car_odd, noise_sigma=0.05, oos_rate=0.11, ooc_rate=0.0, seed=11
    )


@pytest.fixture(scope="session")
def clean_world(car_odd) -> EmbeddingWorld:
    return EmbeddingWorld.for_odd(
        car_odd, noise_sigma=0.05, oos_rate=0.0, ooc_rate=0.0, seed=11
    )


@pytest.fixture(scope="session")
def vehicle_odd() -> OperationalDesignDomain:
    """Five-dimension domain of shape (4, 4, 13, 6, 15); 18,720 subgroups."""
    return OperationalDesignDomain(
        dimensions=(
            SemanticDimension("viewpoint", ("center", "side", "front", "rear")),
            SemanticDimension("size", ("", "small", "large", "huge"), neutral_first=True),
            SemanticDimension(
                "color",
                (
                    "", "black", "white", "gray", "red", "green", "blue",
                    "yellow", "orange", "purple", "magenta", "cyan", "brown",
                ),
                neutral_first=True,
            ),
            SemanticDimension(
                "weather",
                ("", "rainy", "snowy", "lightning", "foggy", "sunny"),
                neutral_first=True,
            ),
            SemanticDimension(
                "background",
                (
                    "background", "forest", "desert", "lake", "mountain",
                    "beach", "city", "river", "house", "tree", "field",
                    "lawn", "garden", "street", "people",
                ),
            ),
        ),
        source_class="minivan",
        target_classes=(
            "amphibian",
            "fire_engine",
            "garbage_truck",
            "go-kart",
            "golfcart",
            "moving_van",
            "pickup",
            "police_van",
            "snowplow",
            "tow_truck",
            "trailer_truck",
        ),
    )


@pytest.fixture(scope="session")
def vehicle_template() -> PromptTemplate:
    return PromptTemplate(
        "{viewpoint} view of {size} {color} {class} in front of {weather} {background}.",
        class_weight=1.5,
    )


@pytest.fixture(scope="session")
def tiny_odd() -> OperationalDesignDomain:
    return OperationalDesignDomain(
        dimensions=(
            SemanticDimension("color", ("red", "blue")),
            SemanticDimension("scene", ("forest", "desert", "city")),
        ),
        source_class="car",
        target_classes=("truck",),
    )


@pytest.fixture(scope="session")
def tiny_template() -> PromptTemplate:
    return PromptTemplate("A {color} {class} in the {scene}.", class_weight=1.5)
