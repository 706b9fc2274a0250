"""Funding interruptions and lab personnel outcomes.

Reconstructs grant project periods from ExPORTER-style budget records, links
labs to person-year outcomes, and estimates interruption effects with a
stacked clean-control difference-in-differences design.
"""

__version__ = "0.1.0"
