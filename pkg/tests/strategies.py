"""Hypothesis strategies for nested (left, right) binary trees."""
from hypothesis import strategies as st

trees = st.recursive(
    st.just((None, None)),
    lambda sub: st.tuples(st.none() | sub, st.none() | sub),
    max_leaves=40,
)
maybe_trees = st.none() | trees
