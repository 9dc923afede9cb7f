"""Models Package - Data Contracts and Pydantic Models"""