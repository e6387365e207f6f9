"""Amazon S3 byte source.

Reads and writes whole objects with ``get_object`` / ``put_object``. The boto3
client is constructed once per source instance and reused; credentials and
region come from the standard boto3 resolution chain.

S3 URI format: ``s3://<bucket>/<key>``
"""

from __future__ import annotations

import re
import sys

import boto3
import botocore.exceptions
from aws_lambda_powertools import Logger

logger = Logger(service="saddle", stream=sys.stderr)

_S3_URI = re.compile(r"^s3://([^/]+)/(.+)$")


def parse_s3_uri(s3_uri: str) -> tuple[str, str]:
    """Parse an S3 URI into bucket and key components.

    Args:
        s3_uri: URI of the form ``s3://<bucket>/<key>``.

    Returns:
        Tuple of ``(bucket, key)``.

    Raises:
        ParameterError: If the URI does not match the expected format.
    """
    from src.cli import ParameterError

    match = _S3_URI.match(s3_uri)
    if not match:
        raise ParameterError(
            f"Invalid S3 URI '{s3_uri}'. Expected format: s3://<bucket>/<key>"
        )
    return match.group(1), match.group(2)


class S3Source:
    """Whole-object reads and writes against S3.

    Attributes:
        _client: boto3 ``s3`` client, initialised at construction time and
                 reused for all calls.
    """

    def __init__(self, client=None) -> None:
        self._client = client if client is not None else boto3.client("s3")
        logger.debug("S3Source initialised")

    def read(self, location: str) -> bytes:
        from src.cli import SourceError

        bucket, key = parse_s3_uri(location)
        try:
            response = self._client.get_object(Bucket=bucket, Key=key)
            return response["Body"].read()
        except botocore.exceptions.ClientError as exc:
            error_code = exc.response["Error"]["Code"]
            if error_code in ("NoSuchKey", "404"):
                logger.error("Object not found in S3", extra={"s3_uri": location})
                raise SourceError(f"Object not found: {location}") from exc
            if error_code in ("AccessDenied", "403"):
                logger.error("Access denied to S3 object", extra={"s3_uri": location})
                raise SourceError(f"Access denied (s3:GetObject) on {location}") from exc
            logger.error(
                "Unexpected S3 error on read",
                extra={"s3_uri": location, "error_code": error_code},
                exc_info=True,
            )
            raise SourceError(f"Failed to read {location}: {error_code}") from exc

    def write(self, location: str, payload: bytes) -> None:
        from src.cli import SourceError

        bucket, key = parse_s3_uri(location)
        try:
            self._client.put_object(Bucket=bucket, Key=key, Body=payload)
        except botocore.exceptions.ClientError as exc:
            error_code = exc.response["Error"]["Code"]
            logger.error(
                "S3 write failed",
                extra={"s3_uri": location, "error_code": error_code},
                exc_info=True,
            )
            raise SourceError(f"Failed to write {location}: {error_code}") from exc
        logger.debug("Object written to S3", extra={"s3_uri": location, "size": len(payload)})
