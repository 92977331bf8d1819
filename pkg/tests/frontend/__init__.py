# Front-end tests package
