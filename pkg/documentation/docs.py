LAB_VERSION = "0.2.0"
FEATURE_OR_CODENAME = "Desk-scale detector"


# Top level description of the lab
LAB_DESCRIPTION = """
Numerical lab for analytic wave front sets of long-range Schrodinger evolutions
in one dimension. Every subcommand reads a JSON scenario, writes CSV tables and
a run manifest into the output directory, and exits 0 when every gate passes,
2 when a decay rate lands in the inconclusive band and 1 on any other failure.
"""

# NOTE: This dict is what should be provided
# to the ArgumentParser() constructor and to
# setup_commands for the subcommand help
LAB_DOCS_METADATA = {
    "description": LAB_DESCRIPTION,
    "prog": "schrodlab",
    "version": f"{LAB_VERSION} - {FEATURE_OR_CODENAME}",
    "commands": [
        {
            "name": "flow",
            "description": "Assumption A, q-flow trajectories, non-trapping probe and xi_plus",
        },
        {
            "name": "phase",
            "description": "Hamilton-Jacobi phase W cache with eikonal and growth certificates",
        },
        {
            "name": "fbi",
            "description": "FBI transform of u0 near the seed and its decay map",
        },
        {
            "name": "evolve",
            "description": "Modified evolution G0 of u0 with saddle and contour margins",
        },
        {
            "name": "contours",
            "description": "Sampled certificates for both contour deformations",
        },
        {
            "name": "detect",
            "description": "Both sides of the wave front set equivalence, with symbol and propagator gates",
        },
        {
            "name": "all",
            "description": "Every subcommand in order",
        },
    ],
}
