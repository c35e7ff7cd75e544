"""Cost-optimal planning with complementary pattern database collections."""

__version__ = "0.1.0"
