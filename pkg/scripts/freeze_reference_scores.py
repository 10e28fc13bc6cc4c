#!/usr/bin/env python3
"""Regenerate the frozen normalization constants in mimoq.envs_data.

Averages 1000 episodes of the scripted random and expert policies per
environment at the committed generation seed and prints the dict literal to
paste into REFERENCE_SCORES.
"""

from mimoq import envs_data


def main():
    print("REFERENCE_SCORES = {")
    for env_id in sorted(envs_data.REFERENCE_SCORES):
        rnd, exp = envs_data.estimate_reference_scores(env_id)
        print(f"    {env_id!r}: ({rnd!r}, {exp!r}),")
    print("}")


if __name__ == "__main__":
    main()
