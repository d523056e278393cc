from dotenv import load_dotenv
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from app.backend.api.allocation_service import app as allocation_router
from app.backend.utils.logging_config import setup_logging

load_dotenv()
setup_logging("api")

app = FastAPI(title="Portfolio Allocation API")

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.mount("/allocation", allocation_router)

@app.get("/health")
async def health_check():
    return {"status": "healthy"}
