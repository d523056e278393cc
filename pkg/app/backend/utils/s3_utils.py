# app/backend/utils/s3_utils.py

import boto3
import logging
import os
from pathlib import Path

from botocore.exceptions import BotoCoreError, ClientError
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from .errors import UsageError

logger = logging.getLogger(__name__)

AWS_ACCESS_KEY_ID = os.getenv("AWS_ACCESS_KEY_ID")
AWS_SECRET_ACCESS_KEY = os.getenv("AWS_SECRET_ACCESS_KEY")
AWS_DEFAULT_REGION = os.getenv("AWS_DEFAULT_REGION")


def create_s3_session():
    # Initialize the S3 client
    session = boto3.Session(
        aws_access_key_id=AWS_ACCESS_KEY_ID,
        aws_secret_access_key=AWS_SECRET_ACCESS_KEY,
        region_name=AWS_DEFAULT_REGION,
    )
    return session.client("s3")


def is_s3_uri(destination: str) -> bool:
    return str(destination).startswith("s3://")


def parse_s3_uri(uri: str) -> tuple[str, str]:
    """Split ``s3://bucket/prefix`` into bucket and key prefix."""
    if not is_s3_uri(uri):
        raise UsageError(f"Not an S3 URI: {uri}")
    bucket, _, prefix = uri[len("s3://"):].partition("/")
    if not bucket or not bucket.islower() or not bucket.replace('-', '').replace('.', '').isalnum():
        raise UsageError(f"Invalid bucket name in {uri!r}. Use lowercase alphanumerics and hyphens.")
    return bucket, prefix.strip("/")


@retry(stop=stop_after_attempt(3), retry=retry_if_exception_type((BotoCoreError, ClientError)), reraise=True)
def write_text_to_s3(body: str, bucket_name: str, key: str, content_type: str = "text/plain"):
    """
    Write a text document (CSV, report, model file) to S3.
    """
    s3 = create_s3_session()
    s3.put_object(
        Bucket=bucket_name,
        Key=key,
        Body=body.encode("utf-8"),
        ContentType=content_type,
    )
    logger.info(f"Successfully wrote data to S3: s3://{bucket_name}/{key}")


def write_output(destination: str, name: str, body: str) -> str:
    """
    Write ``body`` as ``name`` under a local directory or an ``s3://`` prefix.

    Returns the location written to.
    """
    content_type = "text/csv" if name.endswith(".csv") else "text/plain"
    if is_s3_uri(destination):
        bucket, prefix = parse_s3_uri(destination)
        key = f"{prefix}/{name}" if prefix else name
        write_text_to_s3(body, bucket, key, content_type=content_type)
        return f"s3://{bucket}/{key}"

    out_dir = Path(destination)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    # newline="" keeps byte-identical output across platforms
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(body)
    logger.info(f"Wrote {path}")
    return str(path)
