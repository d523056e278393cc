import os

import uvicorn
from dotenv import load_dotenv

if __name__ == "__main__":
    load_dotenv()
    uvicorn.run(
        "app.backend.api.main:app",
        host=os.getenv("ALLOC_API_HOST", "0.0.0.0"),
        port=int(os.getenv("ALLOC_API_PORT", "8000")),
        reload=os.getenv("ALLOC_API_RELOAD", "") == "1",
    )
