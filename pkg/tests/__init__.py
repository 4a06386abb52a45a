# Empty __init__.py file to make the tests directory a proper package
