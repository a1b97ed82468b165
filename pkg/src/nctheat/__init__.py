"""Second heat coefficient on noncommutative tori via the rearrangement lemma."""

__version__ = "0.1.0"
