#!/usr/bin/env python3
"""
MCP server exposing the estimator planning tools.

Every tool is a pure computation: budgets, plans and condition checks for a
given observable, defaulting to the deuteron benchmark.
"""

import json
import logging
from typing import Any

from mcp.server import Server
from mcp.types import CallToolResult, TextContent, Tool

from sqpe_estimators import tools

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

server = Server("sqpe-estimators")

_OBSERVABLE_SCHEMA = {
    "type": "object",
    "description": "Pauli expansion {identity_coeff, terms: [{weight, phase, string}]}; defaults to the deuteron",
}


@server.list_tools()
async def list_tools() -> list[Tool]:
    """List available tools."""
    return [
        Tool(
            name="deuteron_summary",
            description="Reference numbers of the two-level deuteron benchmark (energies in MeV)",
            inputSchema={"type": "object", "properties": {}, "required": []},
        ),
        Tool(
            name="decompose_observable",
            description="Pauli expansion and norms of a dense Hermitian matrix",
            inputSchema={
                "type": "object",
                "properties": {
                    "matrix": {
                        "type": "array",
                        "description": "Rows of entries; complex entries as [re, im]",
                    }
                },
                "required": ["matrix"],
            },
        ),
        Tool(
            name="plan_sqpe",
            description="Optimal time step and shot count of the order-K phase-estimation estimator",
            inputSchema={
                "type": "object",
                "properties": {
                    "order": {"type": "integer", "description": "Truncation order K >= 1"},
                    "eps": {"type": "number", "description": "Absolute target error"},
                    "m_K": {"type": "number", "description": "Odd moment <O^(2K+1)>"},
                    "trotter_split": {"type": "boolean", "default": False},
                },
                "required": ["order", "eps", "m_K"],
            },
        ),
        Tool(
            name="oa_budget",
            description="Operator Averaging shot budgets for a relative error",
            inputSchema={
                "type": "object",
                "properties": {
                    "eps_r": {"type": "number"},
                    "observable": _OBSERVABLE_SCHEMA,
                    "theta": {"type": "number", "description": "Ansatz angle in radians (optional)"},
                },
                "required": ["eps_r"],
            },
        ),
        Tool(
            name="check_conditions",
            description="Evaluate the advantage conditions for order K at a relative error",
            inputSchema={
                "type": "object",
                "properties": {
                    "eps_r": {"type": "number"},
                    "K": {"type": "integer"},
                    "observable": _OBSERVABLE_SCHEMA,
                    "theta": {"type": "number"},
                },
                "required": ["eps_r", "K"],
            },
        ),
        Tool(
            name="readout_budget",
            description="Split a shot budget between measurement and readout calibration",
            inputSchema={
                "type": "object",
                "properties": {
                    "p": {"type": "number", "description": "Readout flip probability in [0, 0.5)"},
                    "eps_r": {"type": "number"},
                    "mode": {"type": "string", "enum": ["joint", "precomputed"], "default": "joint"},
                    "observable": _OBSERVABLE_SCHEMA,
                },
                "required": ["p", "eps_r"],
            },
        ),
        Tool(
            name="trotter_intervals",
            description="Product-formula interval count and two-qubit gate estimate",
            inputSchema={
                "type": "object",
                "properties": {
                    "tau": {"type": "number"},
                    "eps": {"type": "number"},
                    "j": {"type": "integer", "description": "0 for first order, j >= 1 for order 2j", "default": 1},
                    "observable": _OBSERVABLE_SCHEMA,
                },
                "required": ["tau", "eps"],
            },
        ),
    ]


_REQUIRED = {
    "decompose_observable": ("matrix",),
    "plan_sqpe": ("order", "eps", "m_K"),
    "oa_budget": ("eps_r",),
    "check_conditions": ("eps_r", "K"),
    "readout_budget": ("p", "eps_r"),
    "trotter_intervals": ("tau", "eps"),
}


def _error(text: str) -> CallToolResult:
    return CallToolResult(content=[TextContent(type="text", text=text)], isError=True)


@server.call_tool()
async def call_tool(name: str, arguments: dict[str, Any]) -> CallToolResult:
    """Execute a tool and return results."""
    logger.info(f"Calling tool: {name} with arguments: {arguments}")
    arguments = arguments or {}

    try:
        missing = [key for key in _REQUIRED.get(name, ()) if key not in arguments]
        if missing:
            return _error(f"Error: missing required argument(s) {', '.join(missing)}")

        if name == "deuteron_summary":
            result = tools.deuteron_summary()
        elif name == "decompose_observable":
            result = tools.decompose_observable(arguments["matrix"])
        elif name == "plan_sqpe":
            result = tools.plan_sqpe(
                arguments["order"], arguments["eps"], arguments["m_K"],
                arguments.get("trotter_split", False),
            )
        elif name == "oa_budget":
            result = tools.oa_budget(arguments["eps_r"], arguments.get("observable"), arguments.get("theta"))
        elif name == "check_conditions":
            result = tools.check_conditions(
                arguments["eps_r"], arguments["K"], arguments.get("observable"), arguments.get("theta"),
            )
        elif name == "readout_budget":
            result = tools.readout_budget(
                arguments["p"], arguments["eps_r"], arguments.get("mode", "joint"), arguments.get("observable"),
            )
        elif name == "trotter_intervals":
            result = tools.trotter_intervals(
                arguments["tau"], arguments["eps"], arguments.get("j", 1), arguments.get("observable"),
            )
        else:
            return _error(f"Unknown tool: {name}")

        if result and result.get("success"):
            return CallToolResult(
                content=[TextContent(type="text", text=json.dumps(result.get("data"), indent=2))],
                isError=False,
            )
        error_msg = result.get("error", "Unknown error") if result else "No result"
        return _error(f"Error: {error_msg}")

    except Exception as e:
        logger.error(f"Error calling tool {name}: {e}", exc_info=True)
        return _error(f"Exception: {str(e)}")


async def main():
    """Run the MCP server over stdio."""
    from mcp.server.stdio import stdio_server

    logger.info("Starting sqpe-estimators MCP server...")
    async with stdio_server() as (read_stream, write_stream):
        await server.run(read_stream, write_stream, server.create_initialization_options())


def create_server():
    """Create and return the MCP server instance for testing."""
    return server


if __name__ == "__main__":
    import asyncio
    asyncio.run(main())
