"""Make numpy arrays into a pydantic-friendly type"""
from typing import (
    Any,
)
from collections.abc import Callable

import numpy as np
from pydantic_core import core_schema
from typing import Annotated

from pydantic import GetJsonSchemaHandler
from pydantic.json_schema import JsonSchemaValue



class _NdarrayPydanticAnnotation:
    @classmethod
    def __get_pydantic_core_schema__(
        cls,
        _source_type: Any,
        _handler: Callable[[Any], core_schema.CoreSchema],
    ) -> core_schema.CoreSchema:
        """
        We return a pydantic_core.CoreSchema that behaves in the following ways:

        * Nested lists of numbers will be parsed as float64 `ndarray` instances
        * `ndarray` instances will be cast to float64 without copying when possible
        * Anything ragged or non-numeric will fail validation
        * Serialization will always return nested lists of python floats,
          whose repr round-trips exactly through JSON
        """

        def validate_from_list(value: Any) -> np.ndarray:
            try:
                arr = np.asarray(value, dtype=np.float64)
            except (TypeError, ValueError) as e:
                raise ValueError(f"not a numeric array: {e}")
            return arr

        from_list_schema = core_schema.chain_schema(
            [
                core_schema.list_schema(),
                core_schema.no_info_plain_validator_function(validate_from_list),
            ]
        )

        return core_schema.json_or_python_schema(
            json_schema=from_list_schema,
            python_schema=core_schema.union_schema(
                [
                    core_schema.chain_schema([
                        core_schema.is_instance_schema(np.ndarray),
                        core_schema.no_info_plain_validator_function(validate_from_list),
                    ]),
                    from_list_schema,
                ]
            ),
            serialization=core_schema.plain_serializer_function_ser_schema(
                lambda instance: instance.tolist()
            ),
        )

    @classmethod
    def __get_pydantic_json_schema__(
        cls, _core_schema: core_schema.CoreSchema, handler: GetJsonSchemaHandler
    ) -> JsonSchemaValue:
        return handler(core_schema.list_schema(core_schema.any_schema()))


PydanticNdarray = Annotated[
    np.ndarray, _NdarrayPydanticAnnotation
]
