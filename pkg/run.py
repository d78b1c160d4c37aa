import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

from surfparc import create_cli

cli = create_cli(os.environ.get('SURFPARC_CONFIG', 'default'))

if __name__ == '__main__':
    cli(prog_name='surfparc')
