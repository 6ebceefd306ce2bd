from .cli import app

app(prog_name="ladder_control")
